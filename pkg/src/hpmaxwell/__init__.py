"""hp finite elements for time-harmonic Maxwell problems with impedance boundary conditions."""
