"""scigeo: offline analytics engine for mapping the geography of
emerging research topics from local paper, institute and company dumps."""

__version__ = "0.1.0"
