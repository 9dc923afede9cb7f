"""Package src - Flowcell NEMD neighbor search core"""
