'''Dual prior modulation network for scene-text super-resolution'''

__version__ = "0.1.0"
