"""Constants, Itô residuals and Monte Carlo verification experiments."""
