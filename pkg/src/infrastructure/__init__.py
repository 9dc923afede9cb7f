"""Infrastructure Package - Cell lists, pair kernel, config and monitoring"""
