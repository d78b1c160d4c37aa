import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _flag(name, default='false'):
    return os.environ.get(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    basedir = os.path.abspath(os.path.dirname(__file__))
    OUTPUT_DIR = os.environ.get('SURFPARC_OUTPUT_DIR')  # None -> use the run file's output_dir
    DEFAULT_RUN_CONFIG = os.path.join(basedir, 'config', 'runs', 'default.json')
    WORKERS = int(os.environ.get('SURFPARC_WORKERS', 1))  # per-subject load/eval threads
    LOG_LEVEL = os.environ.get('SURFPARC_LOG_LEVEL', 'INFO').upper()
    CHECK_FINITE = _flag('SURFPARC_CHECK_FINITE')  # NaN/Inf check after every op

class DevelopmentConfig(Config):
    LOG_LEVEL = os.environ.get('SURFPARC_LOG_LEVEL', 'DEBUG').upper()
    CHECK_FINITE = True

class ProductionConfig(Config):
    pass

class TestingConfig(Config):
    WORKERS = 1
    CHECK_FINITE = True

config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
