"""Health check routes"""
from flask import Blueprint, current_app, jsonify
from services.laplacian_basis import get_laplacian_basis_service

health_bp = Blueprint('health', __name__)

@health_bp.route("/health", methods=["GET"])
def health_check():
    """Service status plus the bases already held in memory"""
    basis_service = get_laplacian_basis_service()
    return jsonify({
        "status": "healthy",
        "samples": current_app.config.get("SAMPLES"),
        "kernel": current_app.config.get("KERNEL"),
        "cache_dir": str(basis_service.cache_dir) if basis_service.cache_dir else None,
        "cached_bases": basis_service.cached_grids(),
    }), 200

@health_bp.route("/ping", methods=["GET"])
def ping():
    return "pong", 200
