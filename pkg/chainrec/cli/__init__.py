"""chainrec command-line package (``python -m chainrec.cli``)."""
