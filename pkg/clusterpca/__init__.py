"""ClusterPCA: homogeneity and sub-homogeneity separation by complement-clustering PCA."""
__version__ = "0.1.0"
