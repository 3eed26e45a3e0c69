"""
Fingerprint service - HTTP access to the closed-form and Bayesian regression fits
"""
import logging
import os
from flask import Flask
from config import Config
from routes.fit import fit_bp
from routes.health import health_bp
from utils.helpers import configure_logging

logger = logging.getLogger(__name__)


def create_app(config_object=Config):
    """Application factory"""
    configure_logging(config_object.LOG_LEVEL)
    app = Flask(__name__)
    app.config.from_object(config_object)
    app.register_blueprint(health_bp)
    app.register_blueprint(fit_bp)
    return app


app = create_app()

if __name__ == "__main__":
    logger.info("🚀 Starting fingerprint service...")
    port = int(os.environ.get("PORT", 5000))
    app.run(host="0.0.0.0", port=port, debug=False)
