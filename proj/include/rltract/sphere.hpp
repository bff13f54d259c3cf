#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <mutex>
#include <span>
#include <stdexcept>

#include "rltract/geometry.hpp"

namespace rlt {

// Fixed 100-direction spherical design (electrostatic-repulsion optimized,
// minimum pairwise angle ~20.4 degrees). Used both as the quadrature grid
// for spherical-harmonic least-squares projection and as the channel
// directions of raw-signal volumes.
inline constexpr int kSphereDirCount = 100;
inline constexpr double kSphereDirs[kSphereDirCount][3] = {
    {-0.0082566214405403234, -0.16172761614731124, 0.98680089500248003},
    {-0.24990599484374848, 0.096301062838381968, 0.96346930363004013},
    {0.14978696473980915, 0.16696880060432767, 0.97451797562630293},
    {-0.31183391261936971, -0.32541157669348575, 0.89267402599961154},
    {-0.084251379718534511, 0.4345408472016638, 0.89670282542701052},
    {0.33919958420657725, -0.19692309368746178, 0.91987223963257214},
    {-0.55778953903462625, -0.061907520774844564, 0.82767039877903781},
    {0.33933985552077595, 0.4468944345908149, 0.82772811163261506},
    {0.049195555339004049, -0.49868876393900002, 0.86538391136875159},
    {-0.4702279991753841, 0.33499190992007255, 0.81649620273435253},
    {0.50620945908817028, 0.11905357949158185, 0.85415351590911559},
    {-0.56354212340219034, -0.46582708825854835, 0.68222093122090099},
    {0.10435658940604405, 0.69087990769436125, 0.71539824950286901},
    {0.39396957709597435, -0.52586364364259108, 0.75382716893048984},
    {-0.74697723035005148, 0.20675728209344579, 0.6318832515899574},
    {0.67181137898263721, 0.40177092209663728, 0.62229381904938219},
    {-0.23967607419959522, -0.66490371468194465, 0.70743086563877144},
    {-0.32414037883774532, 0.63804303767375214, 0.69845121295833823},
    {0.6471678935259747, -0.25491583159239495, 0.71846477741968007},
    {-0.79055333383672632, -0.19371389997626473, 0.58094780429538018},
    {0.46542601162569081, 0.68601510089354401, 0.55925120388625271},
    {0.098219834469492215, -0.78091891583828299, 0.61686182488685937},
    {-0.6520352031589558, 0.54927058491259861, 0.52263937700027085},
    {0.77975661353334658, 0.060950382598265018, 0.62310887853739683},
    {-0.46284138370753181, -0.76513794328658136, 0.44759555546372171},
    {-0.12806319628042431, 0.85647133812669074, 0.50005666151538997},
    {0.71126650025480953, -0.51755727268315221, 0.47564107802843558},
    {-0.92934506220189494, 0.064439300056672186, 0.36354550192398516},
    {0.78078353541957268, 0.5460026290806933, 0.30374034940172806},
    {-0.13740309464104869, -0.91675024273380523, 0.37508583288438452},
    {-0.46124501550181668, 0.81182148599075987, 0.3580487544434186},
    {0.89762419865882037, -0.19750848159060097, 0.39403197545616248},
    {-0.7688708482184875, -0.51443447480700932, 0.37972989069840174},
    {0.21485252987993145, 0.89602178133830956, 0.38856577020051031},
    {0.43809939246605839, -0.75599062725509858, 0.48636107350744379},
    {-0.87379467116674037, 0.40483324860753306, 0.26943072108146759},
    {0.92151810716433513, 0.20291574591243799, 0.33110357628551823},
    {-0.34632289833144925, -0.935642573189161, 0.068069268596557736},
    {-0.13421883936996462, 0.97702010861842647, 0.1655808277350308},
    {0.87075765984522724, -0.46934713959598295, 0.14660955075960247},
    {-0.94644105816271085, -0.25187834882409682, 0.20200648706785379},
    {0.54388054757050985, 0.80954197257070826, 0.22098810968178628},
    {0.22843914241676519, -0.93672952410024157, 0.2652420722487816},
    {-0.71527910618234625, 0.68822214809076621, 0.12135104093626656},
    {0.99542767189400083, -0.065859672341372827, 0.069182754981110831},
    {-0.64218350451950945, -0.75392978315896153, 0.13852880057562944},
    {0.21433641866533876, 0.9761636672359898, 0.034123223794073954},
    {0.61604379997876957, -0.76768216115355747, 0.17650534256594405},
    {-0.99251521303556733, 0.12162926236405469, 0.010948718177870999},
    {0.94352693448334368, 0.33129489327928974, -0.00078586991805232765},
    {-0.002160720654698833, -0.99999735684386903, 0.00078586991805110423},
    {-0.44163843461089081, 0.89712631142147625, -0.010948718177869295},
    {0.92771268709113885, -0.32893013582798553, -0.17650534256594574},
    {-0.8511621705444532, -0.52379248279443169, -0.034123223794073065},
    {0.5004488408985438, 0.85461144917113163, -0.13852880057562905},
    {0.38993745215982367, -0.91823881959778231, -0.069182754981112454},
    {-0.88535706869013042, 0.44879481479191002, -0.12135104093626473},
    {0.95971314019577381, 0.092721797031434669, -0.26524207224878299},
    {-0.58532693391108503, -0.7801004011135485, -0.22098810968178614},
    {-0.073787116853294504, 0.97660065562592357, -0.20200648706785254},
    {0.7298785150272491, -0.66766982328669366, -0.14660955075960438},
    {-0.9667346012092991, -0.19495435443015888, -0.16558082773502933},
    {0.7694432205067897, 0.63507771578671346, -0.068069268596558485},
    {0.11181358784708662, -0.9369461795341828, -0.33110357628551956},
    {-0.66996181590316828, 0.69177904837400983, -0.26943072108146582},
    {0.85808388414497716, -0.16475725764698557, -0.48636107350744506},
    {-0.77531899485722899, -0.49789265754985862, -0.38856577020050975},
    {0.23259507751677888, 0.89537966250364664, -0.37972989069840091},
    {0.48204330323913158, -0.78254268645257896, -0.39403197545616442},
    {-0.91842248639613533, 0.16822968205241995, -0.35804875444341705},
    {0.8203923093528418, 0.43158669664870131, -0.37508583288438524},
    {-0.25848070058734479, -0.91702209764497566, -0.30374034940172895},
    {-0.36683821440914066, 0.85630858484541195, -0.36354550192398377},
    {0.72288714739164861, -0.50119830110237906, -0.47564107802843725},
    {-0.85088074706857764, -0.16107541569744036, -0.50005666151538875},
    {0.57008142740299284, 0.68895963949950578, -0.44759555546372154},
    {0.19918732981565529, -0.75634630502751565, -0.62310887853739783},
    {-0.73332992089486893, 0.43482790702655655, -0.52263937700026919},
    {0.76971497121615162, 0.16437868500195327, -0.61686182488686025},
    {-0.49451940368172415, -0.66534851794683425, -0.55925120388625282},
    {-0.077381471848917693, 0.81025413081259456, -0.58094780429537907},
    {0.45378554705328911, -0.5271499225958729, -0.7184647774196814},
    {-0.70919131617367626, 0.095987395947992452, -0.6984512129583369},
    {0.54891458389565218, 0.4452351625020663, -0.70743086563877156},
    {-0.15817091396316285, -0.766637048901885, -0.62229381904938319},
    {-0.4411750522624876, 0.6372504449753611, -0.63188325158995606},
    {0.6262585979200308, -0.19885866315923584, -0.75382716893049084},
    {-0.61799705442551822, -0.32601378088911337, -0.71539824950286834},
    {0.2543036137061333, 0.68549564043842715, -0.68222093122090044},
    {0.054257005889127408, -0.51718270328003246, -0.85415351590911637},
    {-0.4711382146532605, 0.33371055364450664, -0.81649620273435142},
    {0.48708021536270452, 0.11774357624236279, -0.86538391136875215},
    {-0.31024646346474233, -0.46756101753752433, -0.82772811163261528},
    {-0.12519967567716686, 0.54707106685994855, -0.82767039877903692},
    {0.2976261676725373, -0.25544809075409647, -0.91987223963257292},
    {-0.43805145511369331, -0.063521378637381623, -0.89670282542700974},
    {0.20459386892390871, 0.40158988048056166, -0.89267402599961132},
    {-0.10834057839923397, -0.19641037206148707, -0.97451797562630305},
    {-0.17321432733159173, 0.20426379456406549, -0.96346930363003958},
    {0.14999128506150622, 0.06104595013514124, -0.98680089500248014},
};

// Real even spherical-harmonic basis, orders l in {0,2,4,6}: 28 coefficients.
inline constexpr int kShOrder = 6;
inline constexpr int kShCoeffCount = 28;

namespace detail {

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

}  // namespace detail

// Evaluates the real even SH basis at a unit direction. Basis functions are
// indexed (l, m) with l ascending and m from -l to l:
//   m = 0 :          K(l,0)   P_l^0(cos t)
//   m > 0 : sqrt(2)  K(l,m)   P_l^m(cos t) cos(m p)
//   m < 0 : sqrt(2)  K(l,|m|) P_l^|m|(cos t) sin(|m| p)
// with K(l,m) = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!). Even orders only, so the
// basis is antipodally symmetric.
inline void sh_basis_order6(const Vec3& u, double out[kShCoeffCount]) {
  const double ct = std::clamp(u.z() / u.norm(), -1.0, 1.0);
  const double phi = std::atan2(u.y(), u.x());
  int idx = 0;
  for (int l = 0; l <= kShOrder; l += 2) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      const double k = std::sqrt((2.0 * l + 1.0) / (4.0 * M_PI) *
                                 detail::factorial(l - am) /
                                 detail::factorial(l + am));
      const double p = std::assoc_legendre(l, am, ct);
      double v;
      if (m == 0)
        v = k * p;
      else if (m > 0)
        v = std::sqrt(2.0) * k * p * std::cos(m * phi);
      else
        v = std::sqrt(2.0) * k * p * std::sin(am * phi);
      out[idx++] = v;
    }
  }
}

using ShVec = Eigen::Matrix<double, kShCoeffCount, 1>;

inline double sh_eval(const ShVec& coeffs, const Vec3& u) {
  double basis[kShCoeffCount];
  sh_basis_order6(u, basis);
  double acc = 0.0;
  for (int i = 0; i < kShCoeffCount; ++i) acc += coeffs[i] * basis[i];
  return acc;
}

namespace detail {

struct ShDesign {
  Eigen::Matrix<double, kSphereDirCount, kShCoeffCount> basis;
  Eigen::ColPivHouseholderQR<
      Eigen::Matrix<double, kSphereDirCount, kShCoeffCount>>
      qr;
};

inline const ShDesign& sh_design() {
  static const ShDesign d = [] {
    ShDesign d;
    for (int i = 0; i < kSphereDirCount; ++i) {
      const Vec3 u(kSphereDirs[i][0], kSphereDirs[i][1], kSphereDirs[i][2]);
      double row[kShCoeffCount];
      sh_basis_order6(u, row);
      for (int c = 0; c < kShCoeffCount; ++c) d.basis(i, c) = row[c];
    }
    d.qr.compute(d.basis);
    return d;
  }();
  return d;
}

}  // namespace detail

// Least-squares projection of f(u) = sum_i exp(kappa (<u, v_i>^2 - 1)) onto
// the even SH basis, with f sampled on the fixed 100-direction design.
// The lobe profile is antipodally symmetric by construction, so even orders
// capture it exactly up to truncation.
inline ShVec sh_project_peaks(std::span<const Vec3> peaks, double kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("sh_project_peaks: kappa <= 0");
  if (peaks.empty())
    throw std::invalid_argument("sh_project_peaks: need at least one peak");
  const auto& d = detail::sh_design();
  Eigen::Matrix<double, kSphereDirCount, 1> f;
  for (int i = 0; i < kSphereDirCount; ++i) {
    const Vec3 u(kSphereDirs[i][0], kSphereDirs[i][1], kSphereDirs[i][2]);
    double acc = 0.0;
    for (const Vec3& pk : peaks) {
      const Vec3 v = pk.normalized();
      const double c = u.dot(v);
      acc += std::exp(kappa * (c * c - 1.0));
    }
    f[i] = acc;
  }
  return d.qr.solve(f);
}

}  // namespace rlt
