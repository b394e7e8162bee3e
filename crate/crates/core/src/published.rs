//! Published reference values, kept apart from anything this crate measures.
//!
//! Every table is labeled `published`; simulated and computed numbers are
//! only ever placed next to these, never mixed in.

pub const SOURCE_LABEL: &str = "published";

#[derive(Debug, Clone, Copy)]
pub struct PublishedTable {
    pub id: &'static str,
    pub title: &'static str,
    /// Ambient arrival rate the table was produced at.
    pub lambda: f64,
    pub row_header: &'static str,
    pub rows: &'static [&'static str],
    pub columns: &'static [&'static str],
    /// Row-major, `values[row][column]`.
    pub values: &'static [&'static [f64]],
}

impl PublishedTable {
    pub fn get(&self, row: &str, column: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| *x == row)?;
        let c = self.columns.iter().position(|x| *x == column)?;
        Some(self.values[r][c])
    }

    pub fn cells(&self) -> impl Iterator<Item = (&'static str, &'static str, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(move |(r, row)| {
            self.columns
                .iter()
                .enumerate()
                .map(move |(c, col)| (*row, *col, self.values[r][c]))
        })
    }
}

const D_ROWS: &[&str] = &["1", "2", "3", "4"];
const AVG_MAX: &[&str] = &["avg", "max"];
const BURST_COLUMNS: &[&str] = &[
    "avg_bursts_0", "avg_bursts_2", "avg_bursts_3", "avg_bursts_4",
    "max_bursts_0", "max_bursts_2", "max_bursts_3", "max_bursts_4",
];
const ERROR_COLUMNS: &[&str] = &["baseline", "lag_2000", "lag_10000", "fuzz_2", "fuzz_10"];
const STRATEGY_COLUMNS: &[&str] = &[
    "cumulative-then-total_p0", "cumulative-then-total_p1", "cumulative-then-total_p2",
    "independent_p0", "independent_p1", "independent_p2",
    "mine-then-total_p0", "mine-then-total_p1", "mine-then-total_p2",
    "total-then-mine_p0", "total-then-mine_p1", "total-then-mine_p2",
];
const COMPUTED_COLUMNS: &[&str] = &[
    "expected_p0", "expected_p1", "expected_p2", "max_p0", "max_p1", "max_p2",
];
const COMBINED_COLUMNS: &[&str] = &[
    "avg_lag_0_p0", "avg_lag_0_p1", "avg_lag_0_p2",
    "avg_lag_2000_p0", "avg_lag_2000_p1", "avg_lag_2000_p2",
    "max_lag_0_p0", "max_lag_0_p1", "max_lag_0_p2",
    "max_lag_2000_p0", "max_lag_2000_p1", "max_lag_2000_p2",
];

pub const BASELINE: PublishedTable = PublishedTable {
    id: "t1",
    title: "Queue depth by d",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: AVG_MAX,
    values: &[
        &[18.75, 136.30],
        &[3.24, 6.77],
        &[2.40, 4.70],
        &[2.11, 4.00],
    ],
};

pub const BURSTS: PublishedTable = PublishedTable {
    id: "t2",
    title: "Queue depth by d and burst count",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: BURST_COLUMNS,
    values: &[
        &[18.91, 26.86, 30.23, 32.23, 143.53, 169.83, 194.33, 209.87],
        &[3.26, 3.20, 3.25, 3.24, 6.77, 6.70, 6.97, 7.03],
        &[2.41, 2.46, 2.42, 2.42, 4.80, 4.80, 4.97, 4.97],
        &[2.06, 2.14, 2.08, 2.10, 4.00, 4.00, 4.00, 4.00],
    ],
};

pub const ERROR_MODELS_AVG: PublishedTable = PublishedTable {
    id: "t3",
    title: "Average queue depth under lag and fuzz",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: ERROR_COLUMNS,
    values: &[
        &[18.75, 19.11, 18.87, 19.12, 19.15],
        &[3.24, 3.84, 5.88, 3.98, 7.16],
        &[2.40, 3.40, 6.57, 3.26, 6.57],
        &[2.11, 3.40, 7.42, 2.93, 6.27],
    ],
};

pub const PRIORITY_AVG: PublishedTable = PublishedTable {
    id: "t4",
    title: "Average queue depth by d, strategy and priority",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: STRATEGY_COLUMNS,
    values: &[
        &[0.46, 1.26, 17.55, 0.46, 1.26, 17.22, 0.47, 1.26, 17.09, 0.45, 1.24, 17.12],
        &[0.35, 0.63, 2.54, 0.40, 0.71, 2.11, 0.34, 0.63, 2.42, 0.39, 0.68, 2.15],
        &[0.32, 0.51, 1.69, 0.38, 0.60, 1.45, 0.33, 0.53, 1.64, 0.36, 0.55, 1.51],
        &[0.32, 0.47, 1.41, 0.38, 0.56, 1.20, 0.32, 0.49, 1.37, 0.34, 0.49, 1.24],
    ],
};

pub const PRIORITY_MAX: PublishedTable = PublishedTable {
    id: "t5",
    title: "Maximum queue depth by d, strategy and priority",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: STRATEGY_COLUMNS,
    values: &[
        &[6.07, 14.73, 148.03, 5.77, 14.27, 138.57, 5.77, 15.03, 134.70, 5.77, 14.17, 134.57],
        &[2.27, 3.23, 6.53, 3.90, 4.80, 5.80, 2.37, 3.10, 5.77, 3.57, 4.10, 5.30],
        &[2.00, 2.43, 4.30, 3.23, 3.60, 4.07, 2.00, 2.03, 3.77, 2.77, 3.00, 3.80],
        &[1.93, 2.03, 3.70, 3.07, 3.03, 3.53, 1.93, 2.00, 3.00, 2.30, 2.37, 3.00],
    ],
};

/// Closed-form per-priority values at three equal class rates summing to
/// 0.95 and n = 1000.
pub const PRIORITY_COMPUTED: PublishedTable = PublishedTable {
    id: "t6",
    title: "Computed per-priority expected and maximum queue length",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: COMPUTED_COLUMNS,
    values: &[
        &[0.46341, 0.86364, 6.33333, 7.0, 11.0, 65.0],
        &[0.34874, 0.56753, 1.98778, 3.0, 4.0, 7.0],
        &[0.32672, 0.50958, 1.57149, 3.0, 3.0, 5.0],
        &[0.31985, 0.48479, 1.39012, 3.0, 3.0, 5.0],
    ],
};

pub const ERROR_MODELS_MAX: PublishedTable = PublishedTable {
    id: "t7",
    title: "Maximum queue depth under lag and fuzz",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: ERROR_COLUMNS,
    values: &[
        &[136.30, 154.07, 143.53, 145.13, 150.53],
        &[6.77, 9.67, 19.23, 9.53, 19.93],
        &[4.70, 9.90, 22.53, 7.47, 17.23],
        &[4.00, 10.90, 26.33, 6.80, 16.00],
    ],
};

/// Rows are `b/d`. The load behind the expected-size column is not stated.
pub const FUZZ_ROOTS: PublishedTable = PublishedTable {
    id: "t8",
    title: "Fuzz root and asymptotic expected queue size",
    lambda: f64::NAN,
    row_header: "b/d",
    rows: &["1/2", "2/2", "10/2", "1/3", "2/3", "10/3", "1/4", "2/4", "10/4"],
    columns: &["beta", "expected_size"],
    values: &[
        &[1.618, 3.25512],
        &[1.466, 4.15549],
        &[1.184, 8.79702],
        &[2.000, 1.58037],
        &[1.696, 2.57666],
        &[1.237, 7.59614],
        &[2.302, 0.94372],
        &[1.863, 1.94949],
        &[1.2715, 7.05114],
    ],
};

/// Four bursts, three priorities, mine-then-total.
pub const COMBINED: PublishedTable = PublishedTable {
    id: "t9",
    title: "Queue depth with bursts, priorities and lag combined",
    lambda: 0.95,
    row_header: "d",
    rows: D_ROWS,
    columns: COMBINED_COLUMNS,
    values: &[
        &[0.47, 1.27, 30.64, 0.46, 1.27, 30.61, 7.03, 16.27, 218.13, 7.23, 16.93, 213.10],
        &[0.35, 0.65, 2.54, 0.41, 0.81, 2.93, 2.77, 3.03, 6.13, 4.60, 5.10, 7.83],
        &[0.33, 0.54, 1.69, 0.43, 0.79, 2.31, 2.13, 2.63, 4.00, 5.13, 5.73, 6.93],
        &[0.33, 0.49, 1.41, 0.45, 0.84, 2.20, 2.13, 2.33, 3.30, 5.67, 6.10, 7.17],
    ],
};

pub const LIGHT_BASELINE: PublishedTable = PublishedTable {
    id: "a1",
    title: "Queue depth by d at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: AVG_MAX,
    values: &[
        &[3.02, 24.50],
        &[1.31, 4.10],
        &[1.11, 3.00],
        &[0.98, 2.93],
    ],
};

pub const LIGHT_BURSTS: PublishedTable = PublishedTable {
    id: "a2",
    title: "Queue depth by d and burst count at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: BURST_COLUMNS,
    values: &[
        &[3.02, 2.98, 3.00, 3.00, 24.50, 25.60, 28.80, 29.40],
        &[1.31, 1.34, 1.32, 1.31, 4.10, 4.17, 4.27, 4.27],
        &[1.11, 1.10, 1.09, 1.09, 3.00, 3.00, 3.03, 3.03],
        &[0.98, 0.99, 1.00, 1.00, 2.93, 2.80, 3.00, 3.00],
    ],
};

pub const LIGHT_PRIORITY_AVG: PublishedTable = PublishedTable {
    id: "a3",
    title: "Average queue depth by d, strategy and priority at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: STRATEGY_COLUMNS,
    values: &[
        &[0.34, 0.67, 2.01, 0.34, 0.67, 2.02, 0.33, 0.66, 2.01, 0.33, 0.68, 1.98],
        &[0.27, 0.39, 0.70, 0.29, 0.40, 0.63, 0.27, 0.39, 0.71, 0.28, 0.40, 0.66],
        &[0.25, 0.33, 0.53, 0.27, 0.34, 0.46, 0.25, 0.34, 0.52, 0.26, 0.34, 0.50],
        &[0.25, 0.30, 0.44, 0.27, 0.33, 0.40, 0.25, 0.31, 0.44, 0.25, 0.32, 0.43],
    ],
};

pub const LIGHT_PRIORITY_MAX: PublishedTable = PublishedTable {
    id: "a4",
    title: "Maximum queue depth by d, strategy and priority at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: STRATEGY_COLUMNS,
    values: &[
        &[5.20, 8.57, 21.90, 5.03, 9.70, 21.97, 5.00, 9.10, 21.73, 4.97, 9.00, 22.77],
        &[2.00, 2.90, 3.53, 3.03, 3.10, 3.27, 2.03, 2.33, 3.03, 2.50, 2.87, 3.07],
        &[2.00, 2.00, 2.90, 2.40, 2.43, 2.80, 2.00, 2.00, 2.03, 2.00, 2.00, 2.13],
        &[1.60, 2.00, 2.20, 2.07, 2.07, 2.20, 1.67, 1.93, 2.00, 1.97, 2.00, 2.00],
    ],
};

pub const LIGHT_ERROR_MODELS_AVG: PublishedTable = PublishedTable {
    id: "a5",
    title: "Average queue depth under lag and fuzz at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: ERROR_COLUMNS,
    values: &[
        &[3.02, 2.97, 2.99, 3.00, 2.98],
        &[1.31, 1.67, 2.45, 1.74, 2.77],
        &[1.11, 1.60, 2.79, 1.59, 2.70],
        &[0.98, 1.64, 3.23, 1.51, 2.66],
    ],
};

pub const LIGHT_ERROR_MODELS_MAX: PublishedTable = PublishedTable {
    id: "a6",
    title: "Maximum queue depth under lag and fuzz at light load",
    lambda: 0.75,
    row_header: "d",
    rows: D_ROWS,
    columns: ERROR_COLUMNS,
    values: &[
        &[20.0, 30.0, 24.0, 27.0, 19.0],
        &[4.0, 8.0, 15.0, 7.0, 14.0],
        &[3.0, 7.0, 17.0, 6.0, 13.0],
        &[3.0, 9.0, 17.0, 5.0, 12.0],
    ],
};

pub const ALL: &[PublishedTable] = &[
    BASELINE,
    BURSTS,
    ERROR_MODELS_AVG,
    PRIORITY_AVG,
    PRIORITY_MAX,
    PRIORITY_COMPUTED,
    ERROR_MODELS_MAX,
    FUZZ_ROOTS,
    COMBINED,
    LIGHT_BASELINE,
    LIGHT_BURSTS,
    LIGHT_PRIORITY_AVG,
    LIGHT_PRIORITY_MAX,
    LIGHT_ERROR_MODELS_AVG,
    LIGHT_ERROR_MODELS_MAX,
];

pub fn table(id: &str) -> Option<&'static PublishedTable> {
    ALL.iter().find(|t| t.id == id)
}
