#include "aid/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "aid/error.hpp"
#include "aid/random.hpp"

namespace aid {

ImageGrid ImageGrid::centered(std::size_t width, std::size_t height, double pitch_um) {
    if (width == 0 || height == 0) throw DomainError("image must have at least one pixel");
    if (!(pitch_um > 0.0)) throw DomainError("pixel pitch must be positive");
    ImageGrid g;
    g.width = width;
    g.height = height;
    g.pitch_um = pitch_um;
    g.center_x = 0.5 * static_cast<double>(width - 1);
    g.center_y = 0.5 * static_cast<double>(height - 1);
    g.values.assign(width * height, 0.0);
    return g;
}

double ImageGrid::radius_um(std::size_t x, std::size_t y) const {
    const double dx = (static_cast<double>(x) - center_x) * pitch_um;
    const double dy = (static_cast<double>(y) - center_y) * pitch_um;
    return std::hypot(dx, dy);
}

double ImageGrid::total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

bool ImageGrid::same_geometry(const ImageGrid& o) const {
    return width == o.width && height == o.height && pitch_um == o.pitch_um && center_x == o.center_x &&
           center_y == o.center_y;
}

ImageGrid default_scan() { return ImageGrid::centered(51, 51, 0.8); }

double RadialDensity::at(double r_um) const {
    if (faces_um.size() < 2 || r_um < faces_um.front() || r_um >= faces_um.back()) return 0.0;
    const auto it = std::upper_bound(faces_um.begin(), faces_um.end(), r_um);
    return density[static_cast<std::size_t>(it - faces_um.begin()) - 1];
}

RadialDensity activated_density(const MaterialParams& params, const CarrierState& state) {
    const CarrierState init = initial_state(params, state.grid);
    RadialDensity out;
    out.faces_um = state.grid.faces();
    out.density.resize(state.grid.size());
    for (std::size_t i = 0; i < out.density.size(); ++i)
        out.density[i] = std::max(0.0, init.Q_minus[i] - state.Q_minus[i]);
    return out;
}

RadialDensity disk_density(double radius_um, double density, double outer_um) {
    if (!(radius_um > 0.0) || !(outer_um > radius_um) || density < 0.0)
        throw DomainError("disk needs 0 < radius < outer and density >= 0");
    return RadialDensity{{0.0, radius_um, outer_um}, {density, 0.0}};
}

ImageGrid expected_image(const RadialDensity& profile, double photons_per_ancilla, const ImageGrid& geometry,
                         double thickness_um) {
    if (photons_per_ancilla < 0.0 || !(thickness_um > 0.0)) throw DomainError("invalid photon yield or thickness");
    ImageGrid img = geometry;
    img.values.assign(img.width * img.height, 0.0);
    const double scale = img.pixel_area() * thickness_um * photons_per_ancilla;
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            const double rho = profile.at(img.radius_um(x, y));
            if (rho < 0.0) throw DomainError("negative activation density");
            img.at(x, y) = rho * scale;
        }
    }
    return img;
}

ImageGrid synthesize_image(const RadialDensity& profile, double photons_per_ancilla, const ImageGrid& geometry,
                           std::uint64_t seed, double thickness_um) {
    ImageGrid img = expected_image(profile, photons_per_ancilla, geometry, thickness_um);
    RandomStream rng = RandomStream::derive(seed, "image", 0);
    for (double& v : img.values) v = static_cast<double>(rng.poisson(v));
    return img;
}

ImageGrid differential_image(const ImageGrid& on, const ImageGrid& off) {
    if (!on.same_geometry(off)) throw DomainError("image geometry mismatch");
    ImageGrid d = on;
    for (std::size_t k = 0; k < d.values.size(); ++k) d.values[k] = on.values[k] - off.values[k];
    return d;
}

RadialProfile radial_profile(const ImageGrid& image, double annulus_width_um) {
    if (!(annulus_width_um > 0.0)) throw DomainError("annulus width must be positive");
    RadialProfile prof;
    prof.annulus_width_um = annulus_width_um;
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            const auto i = static_cast<std::size_t>(std::floor(image.radius_um(x, y) / annulus_width_um + 0.5));
            if (i >= prof.sum.size()) {
                prof.sum.resize(i + 1, 0.0);
                prof.pixels.resize(i + 1, 0);
            }
            prof.sum[i] += image.at(x, y);
            ++prof.pixels[i];
        }
    }
    return prof;
}

void RingSpec::validate() const {
    if (!(width_um > 0.0)) throw DomainError("ring width must be positive");
    if (!(radius_um - 0.5 * width_um >= 0.0)) throw DomainError("ring extends past the origin");
}

bool RingSpec::contains(double r_i, double inner_mask_um) const {
    return r_i >= inner_mask_um && r_i >= radius_um - 0.5 * width_um && r_i < radius_um + 0.5 * width_um;
}

double ring_integral(const RadialProfile& profile, const RingSpec& ring, double inner_mask_um) {
    ring.validate();
    double s = 0.0;
    for (std::size_t i = 0; i < profile.sum.size(); ++i) {
        if (ring.contains(profile.radius_um(i), inner_mask_um)) s += profile.sum[i];
    }
    return s;
}

RingStats ring_contrast(const RadialProfile& on, const RadialProfile& off, const RingSpec& ring,
                        const RadialProfile& reference_on, double inner_mask_um) {
    RingStats st;
    st.I_on = ring_integral(on, ring, inner_mask_um);
    st.I_off = ring_integral(off, ring, inner_mask_um);
    st.I_ref = ring_integral(reference_on, ring, inner_mask_um);
    st.dI = st.I_on - st.I_off;
    const double denom = st.I_ref + st.I_off;
    if (denom == 0.0) throw DomainError("ring contrast denominator is zero");
    st.contrast = 2.0 * st.dI / denom;
    const double noise = st.I_on + st.I_off;
    st.snr = noise > 0.0 ? std::abs(st.dI) / std::sqrt(noise) : 0.0;
    return st;
}

RingSweep sweep_ring(const ImageGrid& on, const ImageGrid& off, std::vector<double> r_grid, std::vector<double> w_grid,
                     double inner_mask_um, double annulus_width_um) {
    if (!on.same_geometry(off)) throw DomainError("image geometry mismatch");
    std::sort(r_grid.begin(), r_grid.end());
    std::sort(w_grid.begin(), w_grid.end());
    const RadialProfile pon = radial_profile(on, annulus_width_um);
    const RadialProfile poff = radial_profile(off, annulus_width_um);
    RingSweep sweep;
    for (double r : r_grid) {
        for (double w : w_grid) {
            const RingSpec ring{r, w};
            if (!(w > 0.0) || r - 0.5 * w < 0.0) continue;
            RingStats st;
            const double ion = ring_integral(pon, ring, inner_mask_um);
            const double ioff = ring_integral(poff, ring, inner_mask_um);
            // Empty rings carry no signal; report zeros instead of failing the sweep.
            if (ion + ioff > 0.0) st = ring_contrast(pon, poff, ring, pon, inner_mask_um);
            sweep.rows.push_back({ring, st});
        }
    }
    // Rows are r-major ascending, so keeping the first strict maximum applies the tie-break.
    auto argmax = [&](auto key) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < sweep.rows.size(); ++k) {
            if (key(sweep.rows[k].stats) > key(sweep.rows[best].stats)) best = k;
        }
        return best;
    };
    sweep.best_dI = argmax([](const RingStats& s) { return std::abs(s.dI); });
    sweep.best_contrast = argmax([](const RingStats& s) { return std::abs(s.contrast); });
    sweep.best_snr = argmax([](const RingStats& s) { return s.snr; });
    return sweep;
}

// ---------------------------------------------------------------------------

void write_grid_csv(const ImageGrid& image, const std::filesystem::path& path, const std::string& unit) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# value_unit=" << unit << ",pitch_um=" << image.pitch_um << ",center_x_px=" << image.center_x
        << ",center_y_px=" << image.center_y << ",width_px=" << image.width << ",height_px=" << image.height
        << "\n";
    out << std::setprecision(17);
    for (std::size_t y = 0; y < image.height; ++y) {
        for (std::size_t x = 0; x < image.width; ++x) {
            if (x) out << ',';
            out << image.at(x, y);
        }
        out << '\n';
    }
}

ImageGrid read_grid_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open image");
    ImageGrid img;
    img.pitch_um = 0.8;
    bool have_center = false;
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::stringstream ss(line.substr(1));
            std::string item;
            while (std::getline(ss, item, ',')) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) continue;
                std::string key = item.substr(0, eq);
                key.erase(0, key.find_first_not_of(' '));
                const std::string val = item.substr(eq + 1);
                if (key == "pitch_um") img.pitch_um = std::stod(val);
                if (key == "center_x_px") img.center_x = std::stod(val), have_center = true;
                if (key == "center_y_px") img.center_y = std::stod(val);
            }
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError(path.string(), "non-numeric pixel value '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError(path.string(), "ragged image rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().empty()) throw ConfigError(path.string(), "empty image");
    img.width = rows.front().size();
    img.height = rows.size();
    if (!have_center) {
        img.center_x = 0.5 * static_cast<double>(img.width - 1);
        img.center_y = 0.5 * static_cast<double>(img.height - 1);
    }
    for (auto& r : rows) img.values.insert(img.values.end(), r.begin(), r.end());
    return img;
}

void write_pgm16(const ImageGrid& image, const std::filesystem::path& path, double scale) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
    for (double v : image.values) {
        const double c = std::clamp(std::round(v * scale), 0.0, 65535.0);
        const auto u = static_cast<std::uint16_t>(c);
        out.put(static_cast<char>(u >> 8));
        out.put(static_cast<char>(u & 0xff));
    }
}

ImageGrid read_pgm16(const std::filesystem::path& path, double pitch_um) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path.string(), "cannot open image");
    std::string magic;
    std::size_t w = 0, h = 0;
    unsigned maxval = 0;
    in >> magic >> w >> h >> maxval;
    in.get();
    if (magic != "P5" || w == 0 || h == 0 || maxval == 0 || maxval > 65535)
        throw ConfigError(path.string(), "not a binary PGM");
    ImageGrid img = ImageGrid::centered(w, h, pitch_um);
    const bool wide = maxval > 255;
    for (double& v : img.values) {
        int hi = in.get();
        int lo = wide ? in.get() : 0;
        if (!in) throw ConfigError(path.string(), "truncated PGM data");
        v = wide ? static_cast<double>((hi << 8) | lo) : static_cast<double>(hi);
    }
    return img;
}

}  // namespace aid
