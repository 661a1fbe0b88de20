from .cache import PredictionCache
from .config import Decoding, EndpointConfig, cache_key, decoding_for
from .http import ChatClient, Completion, RateLimiter, build_wire_messages
from .mock import EchoResponder, MockChatServer
from .runner import RunStats, run_inference, run_synthesis

__all__ = [
    "ChatClient",
    "Completion",
    "Decoding",
    "EchoResponder",
    "EndpointConfig",
    "MockChatServer",
    "PredictionCache",
    "RateLimiter",
    "RunStats",
    "build_wire_messages",
    "cache_key",
    "decoding_for",
    "run_inference",
    "run_synthesis",
]
