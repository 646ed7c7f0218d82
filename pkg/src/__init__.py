# lesionkit - anchor search, weak-label mask generation and FROC evaluation for CT lesion detection
__version__ = "0.1.0"
