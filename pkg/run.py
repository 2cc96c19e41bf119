"""
DDMR Delay Lab - Report API Entry Point
"""
from app import create_app
from config import Config

# Create the Flask application
app = create_app()

if __name__ == '__main__':
    print("=" * 60)
    print("DDMR Delay Lab Report API Starting...")
    print("=" * 60)
    print(f"Environment: {Config.FLASK_ENV}")
    print(f"Report cache TTL: {Config.REPORT_CACHE_TTL} seconds")
    print(f"Default step: {Config.DEFAULT_STEP} s, horizon: {Config.DEFAULT_HORIZON} s")
    print("=" * 60)

    app.run(
        host=Config.API_HOST,
        port=Config.API_PORT,
        debug=(Config.FLASK_ENV == 'development')
    )
