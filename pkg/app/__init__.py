# Phase-Shifted Bell State QKD Simulator - App Package
