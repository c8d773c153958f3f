"""Writer side of the mdprobe activation container.

Only the on-disk interface lives here so far; model loading and prompt
templating are not implemented.
"""

from .container import ContainerError, extraction_meta, write_container

__all__ = ["ContainerError", "extraction_meta", "write_container"]
