"""Offline hidden-state exporter for the TEDBEMB1 interchange format."""

__version__ = "0.1.0"

from .exporter import ExportError, ExportJob, export, read_rows
from .interchange import FormatError, Record, VerifyReport, verify, write_store
