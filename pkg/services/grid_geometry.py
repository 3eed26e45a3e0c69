"""Grid construction, great-circle distances and cell-area quantities"""
import math
import numpy as np
from models.grid import Grid


def build_grid(n_lat, n_lon):
    """Cell-centred grid with spacings pi/n_lat and 2pi/n_lon"""
    return Grid(int(n_lat), int(n_lon))


def great_circle_distance(a, b):
    """Distance on the unit sphere between (lat, lon) pairs in radians, using the Haversine formula"""
    lat1, lon1 = a
    lat2, lon2 = b
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * math.asin(math.sqrt(min(1.0, max(0.0, h))))


def great_circle_matrix(grid):
    """All pairwise distances between cell centres (n_grid x n_grid)"""
    lat = grid.lats
    lon = grid.lons
    dlat = lat[:, np.newaxis] - lat[np.newaxis, :]
    dlon = lon[:, np.newaxis] - lon[np.newaxis, :]
    h = np.sin(dlat / 2) ** 2 + np.outer(np.cos(lat), np.cos(lat)) * np.sin(dlon / 2) ** 2
    d = 2 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    # haversine is symmetric analytically; make it exact
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def cell_areas(grid):
    """dlat * dlon * cos(lat_i) for every cell"""
    return grid.d_lat * grid.d_lon * np.cos(grid.lats)


def cell_radii(grid):
    """Radius of the disc with the same area as each cell"""
    return np.sqrt(cell_areas(grid) / math.pi)


def cell_radius(grid, i):
    grid.check_index(i)
    return math.sqrt(grid.d_lat * grid.d_lon * math.cos(grid.lats[i]) / math.pi)
