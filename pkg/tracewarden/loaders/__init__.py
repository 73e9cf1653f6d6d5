from .config_file import JsonFileMixin, packaged_config_path
