"""API Package - Command-line entry points"""
