"""Instance model, equivalence sets, set functions, beliefs and solvers."""
