"""Static figures from otafl run outputs.

Three scripts, each reading documented CSV schemas and writing an image
file; nothing here imports the simulator or mutates run directories.

  otafl-plot-accuracy   test accuracy vs epoch from metrics.csv files
  otafl-plot-gradients  |gradient| vs coordinate from grad_profile.csv
  otafl-plot-phase      oscillator phase trajectories from phase_*.csv
"""

__version__ = "0.1.0"
