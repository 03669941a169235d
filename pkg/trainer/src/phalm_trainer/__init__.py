"""Binary triplet-validity filter: trains on the pipeline's line-delimited
training-set export and serves scores over POST /score."""

__version__ = "0.1.0"
