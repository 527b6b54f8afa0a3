# imig - Utils package
