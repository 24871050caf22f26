#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aid/carrier_dynamics.hpp"

namespace aid {

/// Square-pixel image on a regular grid. Pixel (x, y) has its center at
/// ((x - center_x) pitch, (y - center_y) pitch) relative to the illumination
/// point. Synthesized scans hold nonnegative integer photon counts; differences
/// and expected-value images hold arbitrary reals.
struct ImageGrid {
    std::size_t width = 0;
    std::size_t height = 0;
    double pitch_um = 0.8;
    double center_x = 0.0;
    double center_y = 0.0;
    std::vector<double> values;  ///< row-major, values[y * width + x]

    static ImageGrid centered(std::size_t width, std::size_t height, double pitch_um);

    double& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
    double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
    double radius_um(std::size_t x, std::size_t y) const;
    double pixel_area() const { return pitch_um * pitch_um; }
    double total() const;
    bool same_geometry(const ImageGrid& other) const;
};

/// Default scan: 51 x 51 pixels of 0.8 um (40.8 um square), centered.
ImageGrid default_scan();

/// Piecewise-constant radial density (um^-3) of activated ancillas.
struct RadialDensity {
    std::vector<double> faces_um;  ///< size() + 1 increasing edges, first 0
    std::vector<double> density;

    /// Density in the shell containing r; zero beyond the last face.
    double at(double r_um) const;
};

/// Ancillas converted relative to the prepared state, max(0, Q_minus(0) - Q_minus(t)).
RadialDensity activated_density(const MaterialParams& params, const CarrierState& state);

/// Disk of radius `radius_um` with uniform density.
RadialDensity disk_density(double radius_um, double density, double outer_um = 1000.0);

/// Noiseless image: density at the pixel-center radius times pixel area,
/// layer thickness and photons per ancilla.
ImageGrid expected_image(const RadialDensity& profile, double photons_per_ancilla, const ImageGrid& geometry,
                         double thickness_um = 1.0);

/// Poisson-sampled image with the expected_image means.
ImageGrid synthesize_image(const RadialDensity& profile, double photons_per_ancilla, const ImageGrid& geometry,
                           std::uint64_t seed, double thickness_um = 1.0);

/// Pixel-wise on - off.
ImageGrid differential_image(const ImageGrid& on, const ImageGrid& off);

/// Sums over annuli [(i - 1/2) w, (i + 1/2) w) of pixel-center distance, i = 0, 1, ...
/// Every pixel falls in exactly one annulus.
struct RadialProfile {
    double annulus_width_um = 1.0;
    std::vector<double> sum;
    std::vector<std::size_t> pixels;

    double radius_um(std::size_t i) const { return static_cast<double>(i) * annulus_width_um; }
};

RadialProfile radial_profile(const ImageGrid& image, double annulus_width_um = 1.0);

struct RingSpec {
    double radius_um = 13.0;
    double width_um = 5.0;

    void validate() const;
    /// Annulus i belongs to the ring when r - w/2 <= r_i < r + w/2 and r_i >= inner_mask.
    bool contains(double r_i, double inner_mask_um) const;
};

struct RingStats {
    double I_on = 0.0;
    double I_off = 0.0;
    double I_ref = 0.0;     ///< on-resonance integrated intensity, contrast normalization
    double dI = 0.0;        ///< I_on - I_off
    double contrast = 0.0;  ///< 2 (I_on - I_off) / (I_ref + I_off)
    double snr = 0.0;       ///< |dI| / sqrt(I_on + I_off)
};

/// Integrates `profile` over the ring annuli.
double ring_integral(const RadialProfile& profile, const RingSpec& ring, double inner_mask_um = 2.0);

/// Ring statistics for an on/off pair; `reference_on` is the profile at the
/// resonance frequency. Throws DomainError when I_ref + I_off is zero.
RingStats ring_contrast(const RadialProfile& on, const RadialProfile& off, const RingSpec& ring,
                        const RadialProfile& reference_on, double inner_mask_um = 2.0);

struct RingRow {
    RingSpec ring;
    RingStats stats;
};

struct RingSweep {
    std::vector<RingRow> rows;  ///< r-major, then w, both ascending
    std::size_t best_dI = 0;
    std::size_t best_contrast = 0;
    std::size_t best_snr = 0;
};

/// Full factorial (r, w) sweep with `on` as its own resonance reference.
/// Cells with r - w/2 < 0 are skipped. Optima maximize |dI|, |contrast| and
/// SNR; ties go to the smallest r, then the smallest w.
RingSweep sweep_ring(const ImageGrid& on, const ImageGrid& off, std::vector<double> r_grid,
                     std::vector<double> w_grid, double inner_mask_um = 2.0, double annulus_width_um = 1.0);

// I/O. Grid CSV: a '#' header line with units and geometry, then one row per y.
void write_grid_csv(const ImageGrid& image, const std::filesystem::path& path, const std::string& unit);
ImageGrid read_grid_csv(const std::filesystem::path& path);
/// Binary 16-bit PGM; values are rounded and clamped to [0, 65535] after
/// multiplying by `scale`.
void write_pgm16(const ImageGrid& image, const std::filesystem::path& path, double scale = 1.0);
ImageGrid read_pgm16(const std::filesystem::path& path, double pitch_um = 0.8);

}  // namespace aid
