#pragma once

#include <array>
#include <cmath>
#include <string>

#include "shuttle/common.hpp"

namespace shuttle {

/// Gate layout and layer stack of one conveyor unit cell. Lengths in nm.
///
/// Stack from bottom to top: SiGe buffer, SiGe barrier, Si well, SiGe barrier
/// (spacer), Si cap, oxide. The atomistic region is barrier + well + barrier.
/// Gates 2, 4 and the screening gates sit on the oxide top surface; gates 1 and
/// 3 are buried `lower_gate_depth` below it (two metal levels).
struct DeviceGeometry {
  double L = 40.0;
  double gate_width = 8.0;
  double gate_gap = 2.0;
  double well_thickness = 8.0;
  double barrier_thickness = 5.0;
  double cap_thickness = 1.0;
  double oxide_thickness = 7.0;
  double buffer_thickness = 20.0;
  double lower_gate_depth = 2.0;
  double y_extent = 40.0;
  double screen_width = 10.0;
  double screen_gap = 4.0;
  double box_x = 9.4;
  double box_y = 6.3;
  double box_z = 10.0;
  double eps_si = 11.7;
  double eps_sige = 13.05;
  double eps_oxide = 9.0;

  double stack_height() const {
    return buffer_thickness + 2.0 * barrier_thickness + well_thickness + cap_thickness + oxide_thickness;
  }
  /// z of the bottom of the atomistic region (bottom barrier) in device coordinates.
  double atomistic_z0() const { return buffer_thickness; }
  double well_bottom() const { return buffer_thickness + barrier_thickness; }
  double well_top() const { return well_bottom() + well_thickness; }
  double atomistic_height() const { return 2.0 * barrier_thickness + well_thickness; }
  /// Left edge of clavier gate j (1-based); gate j is centred on x = (j-1)(w+g).
  double gate_x0(int j) const { return (j - 1) * (gate_width + gate_gap) - 0.5 * gate_width; }

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("geometry.") + name + " must be > 0");
    };
    positive(gate_width, "gate_width");
    positive(gate_gap, "gate_gap");
    positive(well_thickness, "well_thickness");
    positive(barrier_thickness, "barrier_thickness");
    positive(cap_thickness, "cap_thickness");
    positive(oxide_thickness, "oxide_thickness");
    positive(buffer_thickness, "buffer_thickness");
    positive(y_extent, "y_extent");
    positive(box_x, "box_x");
    positive(box_y, "box_y");
    positive(box_z, "box_z");
    positive(eps_si, "eps_si");
    positive(eps_sige, "eps_sige");
    positive(eps_oxide, "eps_oxide");
    if (std::abs(L - 4.0 * (gate_width + gate_gap)) > 1e-9 * std::max(1.0, L))
      throw ConfigError("geometry.L must equal 4*(gate_width+gate_gap) = " +
                        fmt17(4.0 * (gate_width + gate_gap)));
    if (lower_gate_depth < 0.0 || lower_gate_depth >= oxide_thickness)
      throw ConfigError("geometry.lower_gate_depth must lie in [0, oxide_thickness)");
    if (screen_width < 0.0 || screen_gap < 0.0 || 2.0 * (screen_width + screen_gap) >= y_extent)
      throw ConfigError("geometry.screen_width/screen_gap leave no room for the clavier gates");
    if (box_x > L) throw ConfigError("geometry.box_x exceeds L");
    if (box_y > y_extent) throw ConfigError("geometry.box_y exceeds y_extent");
    if (box_z > atomistic_height()) throw ConfigError("geometry.box_z exceeds the atomistic stack height");
  }
};

/// Clavier drive parameters. Voltages in V, period in s.
struct DriveWaveform {
  double A_S = 0.1;
  double B_S = 0.5;
  double dB_S = 0.2;
  double V_S = -0.3;
  double T = 1e-9;

  void validate() const {
    if (!(T > 0.0)) throw ConfigError("drive.T must be > 0");
  }
};

/// Voltage on clavier gate j in {1,2,3,4} at time t.
inline double clavier_voltage(int j, double t, const DriveWaveform& drive) {
  if (j < 1 || j > 4) throw std::domain_error("clavier gate index must be 1..4, got " + std::to_string(j));
  const double phase = 2.0 * constants::pi * t / drive.T - 0.5 * constants::pi * (j - 1);
  return drive.A_S * std::cos(phase) + drive.B_S + drive.dB_S * static_cast<double>((j + 1) % 2);
}

inline constexpr int kNumGates = 6;
using GateVoltages = std::array<double, kNumGates>;

/// [gate1..gate4, screen_left, screen_right]
inline GateVoltages voltage_vector(double t, const DriveWaveform& drive) {
  GateVoltages v{};
  for (int j = 1; j <= 4; ++j) v[j - 1] = clavier_voltage(j, t, drive);
  v[4] = drive.V_S;
  v[5] = drive.V_S;
  return v;
}

}  // namespace shuttle
