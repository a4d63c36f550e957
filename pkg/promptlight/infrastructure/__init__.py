# Infrastructure package: backbone, image files, checkpoints, caches and run logs
