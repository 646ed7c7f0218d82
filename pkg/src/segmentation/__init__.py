"""Dense lesion masks from weak RECIST labels."""
