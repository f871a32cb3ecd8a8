"""Learning decoherence-free structure of Markovian open-system dynamics from measurement records."""

__version__ = "0.1.0"
