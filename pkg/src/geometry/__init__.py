"""Box, RECIST and anchor geometry."""
