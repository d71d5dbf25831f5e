"""Distribution network reconfiguration solvers."""
