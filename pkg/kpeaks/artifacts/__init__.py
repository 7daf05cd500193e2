"""Module for the files a kpeaks run writes."""
from kpeaks.artifacts.fields import save_field, save_json, save_profile
from kpeaks.artifacts.manifest import RunManifest
from kpeaks.artifacts.table import CsvTable, format_number
