# imig - Command blueprints package
