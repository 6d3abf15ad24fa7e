//! Gantt chart rendering: one row per machine, one labeled box per
//! operation, as SVG and as an aligned text chart.

use crate::instance::Time;
use crate::schedule::Schedule;

/// One box on a machine row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GanttBox {
    pub job: usize,
    pub pos: usize,
    pub start: Time,
    pub end: Time,
}

/// Machine-major view of a schedule, boxes sorted by start time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GanttChart {
    pub rows: Vec<Vec<GanttBox>>,
    pub horizon: Time,
}

impl GanttChart {
    pub fn from_schedule(schedule: &Schedule) -> Self {
        let mut rows: Vec<Vec<GanttBox>> = vec![Vec::new(); schedule.n_machines()];
        for job in 0..schedule.n_jobs() {
            for pos in 0..schedule.n_machines() {
                let e = schedule.op(job, pos);
                rows[e.machine].push(GanttBox {
                    job,
                    pos,
                    start: e.start,
                    end: e.end,
                });
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|b| b.start);
        }
        Self {
            rows,
            horizon: schedule.makespan(),
        }
    }
}

const ROW_HEIGHT: u32 = 28;
const ROW_GAP: u32 = 8;
const LEFT_MARGIN: u32 = 46;
const TOP_MARGIN: u32 = 24;
const PLOT_WIDTH: f64 = 720.0;

/// Deterministic per-job fill color.
fn job_color(job: usize) -> String {
    let hue = (job as u32 * 47) % 360;
    format!("hsl({hue}, 62%, 62%)")
}

/// Renders the chart as a standalone SVG document.
pub fn to_svg(chart: &GanttChart) -> String {
    let n_rows = chart.rows.len() as u32;
    let height = TOP_MARGIN + n_rows * (ROW_HEIGHT + ROW_GAP) + 28;
    let width = LEFT_MARGIN as f64 + PLOT_WIDTH + 20.0;
    let scale = if chart.horizon == 0 {
        1.0
    } else {
        PLOT_WIDTH / chart.horizon as f64
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"11\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{LEFT_MARGIN}\" y=\"14\">horizon {}</text>\n",
        chart.horizon
    ));
    for (mach, row) in chart.rows.iter().enumerate() {
        let y = TOP_MARGIN + mach as u32 * (ROW_HEIGHT + ROW_GAP);
        svg.push_str(&format!(
            "  <text x=\"4\" y=\"{}\">M{mach}</text>\n",
            y + ROW_HEIGHT / 2 + 4
        ));
        for b in row {
            let x = LEFT_MARGIN as f64 + b.start as f64 * scale;
            let w = (b.end - b.start) as f64 * scale;
            svg.push_str(&format!(
                "  <rect x=\"{x:.2}\" y=\"{y}\" width=\"{w:.2}\" height=\"{ROW_HEIGHT}\" \
                 fill=\"{}\" stroke=\"black\"/>\n",
                job_color(b.job)
            ));
            svg.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{}\">J{}.{}</text>\n",
                x + 2.0,
                y + ROW_HEIGHT / 2 + 4,
                b.job,
                b.pos
            ));
        }
    }
    // Time axis.
    let axis_y = TOP_MARGIN + n_rows * (ROW_HEIGHT + ROW_GAP) + 12;
    svg.push_str(&format!(
        "  <text x=\"{LEFT_MARGIN}\" y=\"{axis_y}\">0</text>\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{axis_y}\" text-anchor=\"end\">{}</text>\n",
        LEFT_MARGIN as f64 + PLOT_WIDTH,
        chart.horizon
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Renders the chart as aligned text, one line per machine. Each cell
/// covers `ceil(horizon / width)` time units; job indices are printed
/// in base 36, idle time as dots.
pub fn to_text(chart: &GanttChart, width: usize) -> String {
    let width = width.max(8);
    let step = (chart.horizon as usize).div_ceil(width).max(1);
    let cells = (chart.horizon as usize).div_ceil(step);
    let mut out = String::new();
    for (mach, row) in chart.rows.iter().enumerate() {
        let mut line = vec!['.'; cells];
        for b in row {
            let glyph = char::from_digit((b.job % 36) as u32, 36).unwrap_or('#');
            let from = b.start as usize / step;
            let to = ((b.end as usize).div_ceil(step)).min(cells);
            for cell in line.iter_mut().take(to).skip(from) {
                *cell = glyph;
            }
        }
        out.push_str(&format!("M{mach:<3}|"));
        out.extend(line);
        out.push('\n');
    }
    out.push_str(&format!(
        "     1 cell = {step} time unit{}, horizon = {}\n",
        if step == 1 { "" } else { "s" },
        chart.horizon
    ));
    out
}
