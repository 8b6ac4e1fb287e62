"""gwnav: 2D vascular-phantom simulator plus a Rainbow+DQfD training stack
for autonomous guidewire navigation."""

__version__ = "0.1.0"
