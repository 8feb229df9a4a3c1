"""Ground-truth engines: Gaussian quadrature and Monte Carlo simulation"""
