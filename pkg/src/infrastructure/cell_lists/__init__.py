"""Cell Lists Package - Dynamic-size and dynamic-offset strategies"""
