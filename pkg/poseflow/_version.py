"""Version information for poseflow"""

__version__ = "0.1.0"
