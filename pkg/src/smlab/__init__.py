"""smlab: singularity-refined meshes, partition-tree orderings and elimination cost counting."""

__version__ = "0.1.0"
