"""Agent-to-agent orchestration hub.

Accepts JSON-RPC message/send traffic shaped like an enterprise
conversational UI, routes each query deterministically across simulated
project/account boundaries, and guarantees text-only responses on the UI
channel with full structured observability on a parallel REST channel.
"""

__version__ = "0.1.0"
