"""Regular latitude-longitude grid"""
import math
from dataclasses import dataclass
from functools import cached_property
import numpy as np
from utils.errors import GridError


@dataclass(frozen=True)
class Grid:
    """
    Cell-centred regular grid on the unit sphere.
    Cells are ordered with longitude varying fastest; coordinates are radians.
    """
    n_lat: int
    n_lon: int

    def __post_init__(self):
        if self.n_lat < 2 or self.n_lon < 2:
            raise GridError(f"grid needs n_lat >= 2 and n_lon >= 2, got ({self.n_lat}, {self.n_lon})")

    @property
    def d_lat(self):
        return math.pi / self.n_lat

    @property
    def d_lon(self):
        return 2.0 * math.pi / self.n_lon

    @property
    def n_grid(self):
        return self.n_lat * self.n_lon

    @property
    def lat_centers(self):
        return -math.pi / 2.0 + (np.arange(self.n_lat) + 0.5) * self.d_lat

    @property
    def lon_centers(self):
        return (np.arange(self.n_lon) + 0.5) * self.d_lon

    @cached_property
    def lats(self):
        values = np.repeat(self.lat_centers, self.n_lon)
        values.setflags(write=False)
        return values

    @cached_property
    def lons(self):
        values = np.tile(self.lon_centers, self.n_lat)
        values.setflags(write=False)
        return values

    @property
    def cells(self):
        return list(zip(self.lats.tolist(), self.lons.tolist()))

    @property
    def descriptor(self):
        return (self.n_lat, self.n_lon)

    def cell_coords(self, index):
        self.check_index(index)
        return float(self.lats[index]), float(self.lons[index])

    def index_of(self, lat, lon):
        """Index of the cell whose centre is (lat, lon)"""
        i = int(round((lat + math.pi / 2.0) / self.d_lat - 0.5))
        j = int(round((lon % (2.0 * math.pi)) / self.d_lon - 0.5)) % self.n_lon
        if not 0 <= i < self.n_lat:
            raise GridError(f"latitude {lat} outside the grid")
        return i * self.n_lon + j

    def check_index(self, index):
        if not 0 <= index < self.n_grid:
            raise GridError(f"cell index {index} out of range [0, {self.n_grid})")

    def __reduce__(self):
        return (Grid, (self.n_lat, self.n_lon))
