"""IMU-stabilized delay-and-sum beamforming for in-air 3D sonar, with a built-in simulator."""

__version__ = "0.1.0"
