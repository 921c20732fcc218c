# Zeno-stability simulator for direct-integral histories
__version__ = "0.1.0"
