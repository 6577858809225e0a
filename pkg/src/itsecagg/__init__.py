"""Byzantine-resilient secure aggregation for federated learning with
information-theoretic privacy: Shamir sharing, one-time MACs and Beaver
triples from a trusted dealer, evaluated as message-driven parties."""

__version__ = "0.1.0"
