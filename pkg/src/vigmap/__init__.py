"""Architecture/mapping co-search for vision GNNs on heterogeneous SoCs."""

__version__ = "0.1.0"
