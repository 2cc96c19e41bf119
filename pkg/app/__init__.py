"""
DDMR Delay Lab - Flask Application Factory
"""
from flask import Flask
from config import Config


def create_app(config_class=Config):
    """Application factory pattern"""
    app = Flask(__name__)
    app.config.from_object(config_class)

    # Initialize extensions
    from app.extensions import init_extensions
    init_extensions(app)

    # Register blueprints
    from app.routes import main_bp, synthesis_bp, simulation_bp

    app.register_blueprint(main_bp)
    app.register_blueprint(synthesis_bp, url_prefix='/api')
    app.register_blueprint(simulation_bp, url_prefix='/api')

    return app
