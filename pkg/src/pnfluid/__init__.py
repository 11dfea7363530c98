"""Performance analysis of timed Petri nets with preselection and priority routing."""

__version__ = "0.1.0"
