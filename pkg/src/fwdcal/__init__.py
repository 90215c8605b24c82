"""Session-type forwarders: checking, synthesis, compatibility, composition."""

__version__ = "0.1.0"
