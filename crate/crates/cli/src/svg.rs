//! Deterministic SVG rendering of Morse sets on the grid.
//!
//! Output bytes are a pure function of the grid and the layers: colors
//! come from a fixed palette, coordinates are printed with fixed
//! precision, and layers are drawn in the order given. Grids with more
//! than two dimensions get a frame and a note instead of cells.

use std::fmt::Write;

use morsescope::{CellId, Grid};

const MARGIN: f64 = 50.0;
const PLOT: f64 = 640.0;

/// Fill colors for Morse sets, keyed by set index modulo the palette.
const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46c5f0",
    "#f032e6", "#9acd32", "#008080", "#9a6324", "#800000", "#808000",
];

pub fn palette_color(set: usize) -> &'static str {
    PALETTE[set % PALETTE.len()]
}

/// Darkened shade of a `#rrggbb` color, used for verification collars.
pub fn darken(color: &str) -> String {
    let v = u32::from_str_radix(&color[1..], 16).expect("palette colors are hex");
    let scale = |c: u32| (c as f64 * 0.55) as u32;
    format!(
        "#{:02x}{:02x}{:02x}",
        scale((v >> 16) & 0xff),
        scale((v >> 8) & 0xff),
        scale(v & 0xff)
    )
}

/// One batch of equally colored cells. Layers draw in order, so put
/// collars before the sets they surround.
pub struct Layer {
    pub fill: String,
    pub cells: Vec<u64>,
}

pub fn render(grid: &Grid, layers: &[Layer]) -> String {
    let size = 2.0 * MARGIN + PLOT;
    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" \
         viewBox=\"0 0 {size} {size}\">\n"
    );
    let _ = write!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{size}\" height=\"{size}\" fill=\"#ffffff\"/>\n"
    );

    let dim = grid.dim();
    if dim <= 2 {
        let divs = grid.divisions();
        let nx = divs[0] as f64;
        let ny = if dim == 2 { divs[1] as f64 } else { 1.0 };
        let sx = PLOT / nx;
        let sy = PLOT / ny;
        for layer in layers {
            for &cell in &layer.cells {
                let mi = grid.multi_index(CellId(cell));
                let mx = mi[0] as f64;
                let my = if dim == 2 { mi[1] as f64 } else { 0.0 };
                let x = MARGIN + mx * sx;
                let y = MARGIN + PLOT - (my + 1.0) * sy;
                let _ = write!(
                    out,
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{sx:.2}\" height=\"{sy:.2}\" \
                     fill=\"{}\"/>\n",
                    layer.fill
                );
            }
        }
    } else {
        let _ = write!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"14\">\
             cell rendering covers 1- and 2-dimensional grids</text>\n",
            MARGIN,
            MARGIN - 14.0
        );
    }

    let _ = write!(
        out,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{PLOT}\" height=\"{PLOT}\" \
         fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n"
    );
    let domain = grid.domain();
    let labels = [
        (MARGIN, MARGIN + PLOT + 18.0, "start", domain[0].lo),
        (MARGIN + PLOT, MARGIN + PLOT + 18.0, "end", domain[0].hi),
    ];
    for (x, y, anchor, value) in labels {
        let _ = write!(
            out,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"{anchor}\">{value}</text>\n"
        );
    }
    if dim >= 2 {
        let side = [
            (MARGIN + PLOT, "start", domain[1].lo),
            (MARGIN, "end", domain[1].hi),
        ];
        for (y, _, value) in side {
            let _ = write!(
                out,
                "<text x=\"{:.2}\" y=\"{y:.2}\" font-family=\"monospace\" font-size=\"12\" \
                 text-anchor=\"end\">{value}</text>\n",
                MARGIN - 6.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use morsescope::interval::Interval;
    use morsescope::IvBox;

    fn grid2() -> Grid {
        let domain: IvBox = [Interval::new(-1.0, 1.0), Interval::new(-1.0, 1.0)]
            .into_iter()
            .collect();
        Grid::new(domain, vec![8, 8]).unwrap()
    }

    #[test]
    fn identical_input_renders_identical_bytes() {
        let grid = grid2();
        let layers = vec![
            Layer {
                fill: darken(palette_color(0)),
                cells: vec![1, 2],
            },
            Layer {
                fill: palette_color(0).to_string(),
                cells: vec![9, 10],
            },
        ];
        assert_eq!(render(&grid, &layers), render(&grid, &layers));
    }

    #[test]
    fn empty_layers_draw_only_the_frame() {
        let svg = render(&grid2(), &[]);
        assert!(svg.contains("stroke=\"#000000\""));
        assert_eq!(svg.matches("fill=\"#e6").count(), 0);
    }

    #[test]
    fn one_dimensional_grids_render_columns() {
        let domain: IvBox = [Interval::new(0.0, 4.0)].into_iter().collect();
        let grid = Grid::new(domain, vec![4]).unwrap();
        let svg = render(
            &grid,
            &[Layer {
                fill: palette_color(1).to_string(),
                cells: vec![2],
            }],
        );
        assert!(svg.contains("height=\"640.00\""));
    }

    #[test]
    fn darken_scales_channels() {
        assert_eq!(darken("#ffffff"), "#8c8c8c");
        assert_eq!(darken("#000000"), "#000000");
    }
}
