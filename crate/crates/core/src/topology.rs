//! Manhattan grid of single-lane unidirectional roads.
//!
//! Four horizontal and four vertical roads cross at sixteen signalized
//! intersections. Each road is one traffic lane of five 40-cell links; the
//! first cell of every interior link is the shared intersection cell. Lane
//! positions are measured in metres from the lane entry, `x = cell * 7.5`.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

/// Length of one automaton cell in metres.
pub const CELL_LENGTH_M: f64 = 7.5;
/// Cells per link (300 m).
pub const LINK_CELLS: usize = 40;
/// Roads per orientation.
pub const GRID_SIZE: usize = 4;
/// Links along each road.
pub const LINKS_PER_LANE: usize = GRID_SIZE + 1;
/// Cells along each road.
pub const LANE_CELLS: usize = LINKS_PER_LANE * LINK_CELLS;
/// Lane length in metres.
pub const LANE_LENGTH_M: f64 = LANE_CELLS as f64 * CELL_LENGTH_M;
/// Spacing between parallel roads in metres.
pub const BLOCK_M: f64 = LINK_CELLS as f64 * CELL_LENGTH_M;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneId(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntersectionId(pub u8);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub u8);

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for IntersectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The two conflicting approaches of every intersection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Approach {
    Horizontal,
    Vertical,
}

impl Approach {
    pub const ALL: [Approach; 2] = [Approach::Horizontal, Approach::Vertical];

    pub fn index(self) -> usize {
        match self {
            Approach::Horizontal => 0,
            Approach::Vertical => 1,
        }
    }

    pub fn opposing(self) -> Approach {
        match self {
            Approach::Horizontal => Approach::Vertical,
            Approach::Vertical => Approach::Horizontal,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    fn name(self) -> &'static str {
        match self {
            Heading::East => "eastbound",
            Heading::West => "westbound",
            Heading::North => "northbound",
            Heading::South => "southbound",
        }
    }
}

/// A point in the plane, metres. Origin at the south-west corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Debug)]
pub struct Lane {
    pub id: LaneId,
    pub approach: Approach,
    pub heading: Heading,
    /// Row (horizontal) or column (vertical) index.
    pub index: usize,
    /// Intersections in travel order with their cell index on this lane.
    pub crossings: Vec<(IntersectionId, usize)>,
}

impl Lane {
    /// Plane coordinates of a lane position.
    pub fn point(&self, x: f64) -> Point {
        let offset = BLOCK_M * (self.index + 1) as f64;
        match self.heading {
            Heading::East => Point { x, y: offset },
            Heading::West => Point {
                x: LANE_LENGTH_M - x,
                y: offset,
            },
            Heading::North => Point { x: offset, y: x },
            Heading::South => Point {
                x: offset,
                y: LANE_LENGTH_M - x,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    pub id: LinkId,
    pub lane: LaneId,
    pub first_cell: usize,
    pub cells: usize,
    pub upstream: Option<IntersectionId>,
    pub downstream: Option<IntersectionId>,
}

#[derive(Clone, Debug)]
pub struct Intersection {
    pub id: IntersectionId,
    pub row: usize,
    pub column: usize,
    /// Lane and intersection-cell index of each approach, indexed by [`Approach::index`].
    pub approaches: [(LaneId, usize); 2],
}

impl Intersection {
    pub fn point(&self) -> Point {
        Point {
            x: BLOCK_M * (self.column + 1) as f64,
            y: BLOCK_M * (self.row + 1) as f64,
        }
    }

    pub fn lane(&self, approach: Approach) -> LaneId {
        self.approaches[approach.index()].0
    }

    /// Stop-line position `h_n` on the given approach: the cell just upstream
    /// of the intersection cell.
    pub fn stop_line(&self, approach: Approach) -> f64 {
        (self.approaches[approach.index()].1 - 1) as f64 * CELL_LENGTH_M
    }
}

/// Static road network.
#[derive(Clone, Debug)]
pub struct GridTopology {
    pub lanes: Vec<Lane>,
    pub links: Vec<Link>,
    pub intersections: Vec<Intersection>,
    /// Per lane, per cell: the intersection occupying that cell, if any.
    crossing_cells: Vec<Vec<Option<IntersectionId>>>,
}

impl Default for GridTopology {
    fn default() -> Self {
        Self::manhattan()
    }
}

impl GridTopology {
    /// The 4 x 4 grid with alternating road directions. Lanes 0..4 are rows
    /// (south to north), lanes 4..8 are columns (west to east).
    pub fn manhattan() -> Self {
        let mut lanes = Vec::with_capacity(2 * GRID_SIZE);
        for row in 0..GRID_SIZE {
            let heading = if row % 2 == 0 {
                Heading::East
            } else {
                Heading::West
            };
            lanes.push(Lane {
                id: LaneId(row as u8),
                approach: Approach::Horizontal,
                heading,
                index: row,
                crossings: Vec::new(),
            });
        }
        for column in 0..GRID_SIZE {
            let heading = if column % 2 == 0 {
                Heading::North
            } else {
                Heading::South
            };
            lanes.push(Lane {
                id: LaneId((GRID_SIZE + column) as u8),
                approach: Approach::Vertical,
                heading,
                index: column,
                crossings: Vec::new(),
            });
        }

        // Position k along a lane (k = 1..=GRID_SIZE) maps to grid index k-1
        // for increasing headings and GRID_SIZE-k for decreasing ones.
        let along = |heading: Heading, grid_index: usize| -> usize {
            let k = match heading {
                Heading::East | Heading::North => grid_index + 1,
                Heading::West | Heading::South => GRID_SIZE - grid_index,
            };
            k * LINK_CELLS
        };

        let mut intersections = Vec::with_capacity(GRID_SIZE * GRID_SIZE);
        for row in 0..GRID_SIZE {
            for column in 0..GRID_SIZE {
                let h_lane = &lanes[row];
                let v_lane = &lanes[GRID_SIZE + column];
                intersections.push(Intersection {
                    id: IntersectionId((row * GRID_SIZE + column) as u8),
                    row,
                    column,
                    approaches: [
                        (h_lane.id, along(h_lane.heading, column)),
                        (v_lane.id, along(v_lane.heading, row)),
                    ],
                });
            }
        }

        let mut crossing_cells = vec![vec![None; LANE_CELLS]; lanes.len()];
        for node in &intersections {
            for (lane, cell) in node.approaches {
                crossing_cells[lane.0 as usize][cell] = Some(node.id);
                lanes[lane.0 as usize].crossings.push((node.id, cell));
            }
        }
        for lane in &mut lanes {
            lane.crossings.sort_by_key(|&(_, cell)| cell);
        }

        let mut links = Vec::with_capacity(lanes.len() * LINKS_PER_LANE);
        for lane in &lanes {
            for k in 0..LINKS_PER_LANE {
                let upstream = k.checked_sub(1).map(|i| lane.crossings[i].0);
                let downstream = lane.crossings.get(k).map(|c| c.0);
                links.push(Link {
                    id: LinkId(links.len() as u8),
                    lane: lane.id,
                    first_cell: k * LINK_CELLS,
                    cells: LINK_CELLS,
                    upstream,
                    downstream,
                });
            }
        }

        GridTopology {
            lanes,
            links,
            intersections,
            crossing_cells,
        }
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0 as usize]
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0 as usize]
    }

    pub fn lane_cells(&self) -> usize {
        LANE_CELLS
    }

    pub fn lane_length(&self) -> f64 {
        LANE_LENGTH_M
    }

    pub fn crossing_at(&self, lane: LaneId, cell: usize) -> Option<IntersectionId> {
        self.crossing_cells[lane.0 as usize]
            .get(cell)
            .copied()
            .flatten()
    }

    /// Plane coordinates of a lane position.
    pub fn point(&self, lane: LaneId, x: f64) -> Point {
        self.lane(lane).point(x)
    }

    /// Entry cell of every lane; vehicles spawn here.
    pub fn entries(&self) -> impl Iterator<Item = (LaneId, usize)> + '_ {
        self.lanes.iter().map(|l| (l.id, 0))
    }

    /// Stop lines along a lane in travel order: (intersection, approach, h_n).
    pub fn stop_lines(&self, lane: LaneId) -> impl Iterator<Item = (IntersectionId, f64)> + '_ {
        self.lane(lane)
            .crossings
            .iter()
            .map(|&(node, cell)| (node, (cell - 1) as f64 * CELL_LENGTH_M))
    }

    /// Intersection nearest to a plane point (ties to the lower ID).
    pub fn nearest_intersection(&self, p: Point) -> IntersectionId {
        let column = ((p.x / BLOCK_M).round() as i64 - 1).clamp(0, GRID_SIZE as i64 - 1) as usize;
        let row = ((p.y / BLOCK_M).round() as i64 - 1).clamp(0, GRID_SIZE as i64 - 1) as usize;
        IntersectionId((row * GRID_SIZE + column) as u8)
    }

    /// Plain-text adjacency listing.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for lane in &self.lanes {
            let _ = write!(
                out,
                "lane {} {:?} {} index {}: entry",
                lane.id,
                lane.approach,
                lane.heading.name(),
                lane.index
            );
            for &(node, cell) in &lane.crossings {
                let _ = write!(out, " -> I{node}@{cell}");
            }
            let _ = writeln!(out, " -> exit@{LANE_CELLS}");
        }
        for link in &self.links {
            let name = |n: Option<IntersectionId>, edge: &str| match n {
                Some(id) => format!("I{id}"),
                None => edge.to_string(),
            };
            let _ = writeln!(
                out,
                "link {} lane {} cells {}..{}: {} -> {}",
                link.id.0,
                link.lane,
                link.first_cell,
                link.first_cell + link.cells,
                name(link.upstream, "entry"),
                name(link.downstream, "exit"),
            );
        }
        for node in &self.intersections {
            let p = node.point();
            let _ = writeln!(
                out,
                "intersection {} at ({}, {}): horizontal lane {} cell {}, vertical lane {} cell {}",
                node.id,
                p.x,
                p.y,
                node.approaches[0].0,
                node.approaches[0].1,
                node.approaches[1].0,
                node.approaches[1].1,
            );
        }
        out
    }
}
