"""Domain Package - Lattice, remapping, forces and integration"""
