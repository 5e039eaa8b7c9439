#include "headgan/preview.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "headgan/errors.hpp"

namespace headgan::preview {

Tensor make_grid(const std::vector<Tensor>& images, int cols) {
    if (images.empty()) throw DataError("make_grid: no images");
    if (cols < 1) throw ConfigError("make_grid: cols must be >= 1");
    const Tensor& first = images.front();
    if (first.ndim() != 3 || first.dim(0) != 3)
        throw DataError("make_grid: images must be (3,H,W)");
    for (const Tensor& t : images)
        if (!t.same_shape(first)) throw DataError("make_grid: images must share one shape");

    const int n = static_cast<int>(images.size());
    const int rows = (n + cols - 1) / cols;
    const int h = first.dim(1), w = first.dim(2);
    const int sep = 2;
    Tensor grid({3, rows * h + (rows - 1) * sep, cols * w + (cols - 1) * sep});
    grid.fill(0.0f);
    for (int i = 0; i < n; ++i) {
        const int r = i / cols, c = i % cols;
        const int oy = r * (h + sep), ox = c * (w + sep);
        const Tensor& img = images[static_cast<std::size_t>(i)];
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    grid.at(ch, oy + y, ox + x) = std::clamp(img.at(ch, y, x), 0.0f, 1.0f);
    }
    return grid;
}

namespace {

// 3x5 bitmap glyphs, rows top to bottom, '1' = lit.
const char* glyph(char c) {
    switch (c) {
        case 'a': return "010101111101101";
        case 'b': return "110101110101110";
        case 'c': return "011100100100011";
        case 'd': return "110101101101110";
        case 'e': return "111100110100111";
        case 'f': return "111100110100100";
        case 'g': return "011100101101011";
        case 'h': return "101101111101101";
        case 'i': return "111010010010111";
        case 'j': return "001001001101010";
        case 'k': return "101110100110101";
        case 'l': return "100100100100111";
        case 'm': return "101111111101101";
        case 'n': return "110101101101101";
        case 'o': return "010101101101010";
        case 'p': return "110101110100100";
        case 'q': return "010101101010001";
        case 'r': return "110101110110101";
        case 's': return "011100010001110";
        case 't': return "111010010010010";
        case 'u': return "101101101101111";
        case 'v': return "101101101101010";
        case 'w': return "101101111111101";
        case 'x': return "101101010101101";
        case 'y': return "101101010010010";
        case 'z': return "111001010100111";
        case '0': return "111101101101111";
        case '1': return "010110010010111";
        case '2': return "111001111100111";
        case '3': return "111001011001111";
        case '4': return "101101111001001";
        case '5': return "111100111001111";
        case '6': return "111100111101111";
        case '7': return "111001010010010";
        case '8': return "111101111101111";
        case '9': return "111101111001111";
        case '_': return "000000000000111";
        case '.': return "000000000000010";
        case '-': return "000000111000000";
        default: return "000000000000000";
    }
}

void put_pixel(Tensor& img, int y, int x, const float rgb[3]) {
    if (y < 0 || x < 0 || y >= img.dim(1) || x >= img.dim(2)) return;
    for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
}

void draw_text(Tensor& img, int y0, int x0, const std::string& text, const float rgb[3]) {
    int x = x0;
    for (char c : text) {
        const char* g = glyph(c);
        for (int r = 0; r < 5; ++r)
            for (int col = 0; col < 3; ++col)
                if (g[r * 3 + col] == '1') put_pixel(img, y0 + r, x + col, rgb);
        x += 4;
    }
}

void draw_line(Tensor& img, double y0, double x0, double y1, double x1, const float rgb[3]) {
    const int steps = std::max(1, static_cast<int>(std::ceil(
                                      std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        put_pixel(img, static_cast<int>(std::lround(y0 + t * (y1 - y0))),
                  static_cast<int>(std::lround(x0 + t * (x1 - x0))), rgb);
    }
}

const float kPalette[8][3] = {{0.85f, 0.15f, 0.15f}, {0.15f, 0.35f, 0.85f},
                              {0.10f, 0.60f, 0.20f}, {0.80f, 0.55f, 0.10f},
                              {0.55f, 0.20f, 0.70f}, {0.10f, 0.60f, 0.60f},
                              {0.75f, 0.30f, 0.50f}, {0.35f, 0.35f, 0.35f}};

}  // namespace

Tensor plot_loss_curves(const std::string& log_path) {
    std::ifstream in(log_path, std::ios::binary);
    if (!in) throw DataError("cannot open loss log: " + log_path);

    struct Series {
        std::string name;
        std::vector<std::pair<double, double>> points;  // (step, value)
    };
    std::vector<Series> series;
    std::unordered_map<std::string, std::size_t> index;
    std::string line;
    double step_min = std::numeric_limits<double>::infinity(), step_max = -step_min;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string step_str, name, value_str;
        if (!std::getline(ls, step_str, '\t') || !std::getline(ls, name, '\t') ||
            !std::getline(ls, value_str))
            continue;
        double step = 0.0, value = 0.0;
        try {
            step = std::stod(step_str);
            value = std::stod(value_str);
        } catch (const std::exception&) {
            continue;
        }
        auto it = index.find(name);
        if (it == index.end()) {
            index.emplace(name, series.size());
            series.push_back({name, {}});
            it = index.find(name);
        }
        series[it->second].points.emplace_back(step, value);
        step_min = std::min(step_min, step);
        step_max = std::max(step_max, step);
    }
    if (series.empty()) throw DataError("nothing to plot: " + log_path);

    const int height = 420, width = 720;
    Tensor img({3, height, width});
    img.fill(1.0f);  // white background

    const int left = 12, right = width - 12;
    const int top = 12 + 8 * static_cast<int>((series.size() + 3) / 4);  // room for the legend
    const int bottom = height - 12;
    const float axis[3] = {0.6f, 0.6f, 0.6f};
    draw_line(img, bottom, left, bottom, right, axis);
    draw_line(img, top, left, bottom, left, axis);

    const double span = (step_max > step_min) ? (step_max - step_min) : 1.0;
    for (std::size_t s = 0; s < series.size(); ++s) {
        const float* rgb = kPalette[s % 8];
        double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
        for (const auto& [st, v] : series[s].points) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        const double vspan = (vmax > vmin) ? (vmax - vmin) : 1.0;
        double px = 0.0, py = 0.0;
        bool first_pt = true;
        for (const auto& [st, v] : series[s].points) {
            const double x = left + (st - step_min) / span * (right - left);
            // Each series is normalized to its own [min,max] band.
            const double y = bottom - (v - vmin) / vspan * (bottom - top);
            if (!first_pt) draw_line(img, py, px, y, x, rgb);
            px = x;
            py = y;
            first_pt = false;
        }
        if (series[s].points.size() == 1) put_pixel(img, static_cast<int>(py), static_cast<int>(px), rgb);

        // Legend entry: swatch + name, 4 per row.
        const int lx = 12 + static_cast<int>(s % 4) * 176;
        const int ly = 8 + static_cast<int>(s / 4) * 8;
        for (int dy = 0; dy < 5; ++dy)
            for (int dx = 0; dx < 5; ++dx) put_pixel(img, ly + dy, lx + dx, rgb);
        const float black[3] = {0.0f, 0.0f, 0.0f};
        draw_text(img, ly, lx + 8, series[s].name, black);
    }
    return img;
}

}  // namespace headgan::preview
