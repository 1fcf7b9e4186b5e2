"""Passthrough frame processor speaking the subprocess backend protocol.

Run as ``python -m dnskit.rt_passthrough``.
"""
from .rt import passthrough, serve_stdio

if __name__ == "__main__":
    serve_stdio(passthrough)
