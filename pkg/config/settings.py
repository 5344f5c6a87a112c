"""
Django settings for the pointamp project.

pointamp has no web surface and no database: Django provides the settings
layer, the management-command CLI (``python manage.py <command>``), logging
configuration and the test runner.
"""

import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('POINTAMP_SECRET_KEY', 'pointamp-local-only')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'apps.ingest',
    'apps.spatial',
    'apps.packets',
    'apps.sdf',
    'apps.render',
    'apps.cli',
]

# No database: every test is a SimpleTestCase.
DATABASES = {}

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'pointamp': {
            'format': '[%(levelname)s] %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'pointamp',
        },
    },
    'loggers': {
        'apps': {
            'handlers': ['console'],
            'level': os.environ.get('POINTAMP_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}


# Pipeline defaults (overridden by --config files and command-line flags)

POINTAMP_THREADS = int(os.environ.get('POINTAMP_THREADS', '0') or 0)  # 0 = auto

POINTAMP = {
    # ingest
    'CLASS_MAP': os.environ.get('POINTAMP_CLASS_MAP', 'dales'),
    'GROUND_AS': 'ground',          # ground | grass | road
    'LOW_VEG_AS_GRASS': False,
    'LOW_VEG_HEIGHT': 0.5,          # meters above ground

    # spatial / packets
    'CELL_SIZE': 0.0,               # 0 = estimate from point spacing
    'CHUNK_FACTOR': 8,
    'RADIUS_MAX': 3.0,
    'GLOBAL_SEED': 0x5EED,
    'TEMPLATES': os.environ.get('POINTAMP_TEMPLATES', ''),

    # camera
    'WIDTH': 640,
    'HEIGHT': 360,
    'VERTICAL_FOV_DEG': 60.0,
    'NEAR': 0.1,
    'FAR': 500.0,
    'CAMERA_POSITION': (0.0, -20.0, 10.0),
    'CAMERA_LOOK_AT': (0.0, 0.0, 0.0),

    # shading
    'LIGHT_DIR': (0.4, -0.3, 0.85),
    'AMBIENT': 0.0,
    'SKY_HORIZON': (0.80, 0.85, 0.90),
    'SKY_ZENITH': (0.35, 0.55, 0.85),

    # tracing
    'HIT_EPS': 1e-3,
    'MAX_STEPS': 256,
    'STEP_CONSTANT': 3.0,
    'TILE_SIZE': 16,

    # culling
    'CULL_FRUSTUM': True,
    'CULL_CHUNK': True,
    'CULL_OCCLUSION': True,
}
