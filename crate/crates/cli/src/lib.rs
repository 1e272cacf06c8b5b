//! Library surface of the diorama command-line toolkit.
