# core package: pure numerical library, no CLI dependencies
__version__ = "1.0.0"
