"""
Object-to-centerline clustering on BEV lane graphs.

Lane graphs of quadratic Bezier centerlines, geometric membership of 3D
detections to centerlines, Hungarian curve matching with an outlier set,
the weighted clustering cross-entropy, a supervision-label pipeline, an EM
solver that fits centerlines as cluster centers, lane-graph metrics and a
synthetic scene generator.
"""

__version__ = "0.1.0"
