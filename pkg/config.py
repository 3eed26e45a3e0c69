import os
from dotenv import load_dotenv
load_dotenv()
class Config:
    """Application configuration"""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    SAMPLES = int(os.getenv('FINGERPRINT_SAMPLES', 2000))
    BURN_IN = int(os.getenv('FINGERPRINT_BURN_IN', 1000))
    SEED = int(os.getenv('FINGERPRINT_SEED', 20240101))
    CREDIBLE_LEVEL = float(os.getenv('FINGERPRINT_CREDIBLE_LEVEL', 0.90))
    KAPPA_CAP = int(os.getenv('FINGERPRINT_KAPPA_CAP', 400))
    KERNEL = os.getenv('FINGERPRINT_KERNEL', 'half_angle')
    CHI2_DF = os.getenv('FINGERPRINT_CHI2_DF', 'kappa_minus_one')
    MAX_ITERATIONS = int(os.getenv('FINGERPRINT_MAX_ITERATIONS', 50))
    THREADS = int(os.getenv('FINGERPRINT_THREADS', 1))
    CACHE_DIR = os.getenv('FINGERPRINT_CACHE_DIR', '.basis_cache')
    WINDOW_YEARS = int(os.getenv('FINGERPRINT_WINDOW_YEARS', 25))
    PRIOR_LOGVAR_SD = float(os.getenv('FINGERPRINT_PRIOR_LOGVAR_SD', 1.0))
    AREA_WEIGHTING = os.getenv('FINGERPRINT_AREA_WEIGHTING', 'true').lower() in ('1', 'true', 'yes')
