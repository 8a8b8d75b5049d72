"""Human-robot teaming stack: learned human policies, most-likely trajectory
prediction, and receding-horizon mixed-integer support planning, with a
closed-loop simulator and an HTTP/WebSocket service on top."""

__version__ = "0.1.0"
