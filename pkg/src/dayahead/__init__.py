"""Day-ahead load-forecast improvement and its effect on dispatch-model prices."""

__version__ = "0.1.0"
