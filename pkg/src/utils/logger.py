import logging
import os

LOGGER_NAME = "apnea_screen"
LOG_FILE_NAME = "apnea_screen.log"

_configured = False


def setup_logger(level: str = "INFO", log_dir: str = "logs") -> logging.Logger:
    """Configure file + stderr handlers once; later calls only adjust the level."""
    global _configured
    root = logging.getLogger()

    if not _configured:
        os.makedirs(log_dir, exist_ok=True)
        formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')

        file_handler = logging.FileHandler(os.path.join(log_dir, LOG_FILE_NAME))
        file_handler.setFormatter(formatter)
        stream_handler = logging.StreamHandler()
        stream_handler.setFormatter(formatter)

        root.addHandler(file_handler)
        root.addHandler(stream_handler)
        _configured = True

    root.setLevel(level.upper())
    return logging.getLogger(LOGGER_NAME)
