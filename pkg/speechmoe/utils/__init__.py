from .path import resolve_path, mkdir, ensure_parent
from .container import encode_container, decode_container, read_container, write_container
from .manifest import parse_manifest, parse_manifest_text, write_manifest, check_tasks

__all__ = [
    "resolve_path",
    "mkdir",
    "ensure_parent",
    "encode_container",
    "decode_container",
    "read_container",
    "write_container",
    "parse_manifest",
    "parse_manifest_text",
    "write_manifest",
    "check_tasks",
]
