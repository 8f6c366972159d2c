"""Geography-aware two-pass WFST decoding with on-demand regional LMs."""

__version__ = "0.1.0"
