"""Forward simulation and inverse inference of infarct scenarios on biventricular meshes."""
