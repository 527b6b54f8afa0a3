# imig - Services package
