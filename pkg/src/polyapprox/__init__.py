"""Random polytope approximation of smooth convex bodies."""
