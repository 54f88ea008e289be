"""Joint reconstruction of multi-bang attenuation and source density from
attenuated Radon transform data, plus a grid-free singularity lab."""

__version__ = "0.1.0"
