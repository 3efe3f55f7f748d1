"""Singer identification from melodic motifs in a cappella recordings.

Pipeline: audio -> f0 track -> contour steps -> closed motif mining ->
acoustic features of motif spans -> neural embeddings and a classifier.
"""

__version__ = "0.1.0"
FORMAT_VERSIONS = {"features": 1, "checkpoint": 1, "contours": 1, "motifs": 1, "dataset": 1}
