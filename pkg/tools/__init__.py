# Numerical modules of the shape instantiation toolkit
__version__ = "0.1.0"
