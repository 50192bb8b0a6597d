#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>

#include "pie/sdp.hpp"

namespace pie {

void write_sdpa(const SdpProblem& prob, std::ostream& os) {
  prob.validate();
  const int nb = static_cast<int>(prob.block_sizes.size());
  const bool lp = prob.num_free > 0;
  os << std::setprecision(17);
  os << "*free " << prob.num_free << "\n";
  os << prob.num_constraints() << "\n";
  os << nb + (lp ? 1 : 0) << "\n";
  for (int n : prob.block_sizes) os << n << " ";
  if (lp) os << -2 * prob.num_free;
  os << "\n";
  for (double b : prob.rhs) os << b << " ";
  os << "\n";
  auto emit = [&](int matno, const LinearForm& f, double sign) {
    for (const auto& e : f.mat) {
      os << matno << " " << e.block + 1 << " " << e.row + 1 << " " << e.col + 1 << " " << sign * e.value << "\n";
    }
    for (const auto& [j, v] : f.free) {
      os << matno << " " << nb + 1 << " " << 2 * j + 1 << " " << 2 * j + 1 << " " << sign * v << "\n";
      os << matno << " " << nb + 1 << " " << 2 * j + 2 << " " << 2 * j + 2 << " " << -sign * v << "\n";
    }
  };
  emit(0, prob.objective, -1.0);
  for (int i = 0; i < prob.num_constraints(); ++i) emit(i + 1, prob.constraints[i], 1.0);
}

SdpProblem read_sdpa(std::istream& is) {
  int nfree = 0;
  std::string line;
  std::ostringstream body;
  while (std::getline(is, line)) {
    if (!line.empty() && (line[0] == '*' || line[0] == '"')) {
      std::istringstream ls(line.substr(1));
      std::string key;
      if (ls >> key && key == "free") ls >> nfree;
      continue;
    }
    for (char& ch : line) {
      if (ch == ',' || ch == '{' || ch == '}' || ch == '(' || ch == ')') ch = ' ';
    }
    body << line << "\n";
  }
  std::istringstream in(body.str());
  int m = 0, nb = 0;
  if (!(in >> m >> nb)) throw std::runtime_error("read_sdpa: missing header");
  std::vector<int> sizes(nb);
  for (auto& s : sizes) {
    if (!(in >> s)) throw std::runtime_error("read_sdpa: missing block sizes");
  }
  SdpProblem p;
  p.rhs.resize(m);
  for (auto& b : p.rhs) {
    if (!(in >> b)) throw std::runtime_error("read_sdpa: missing objective vector");
  }
  // A trailing LP block of size 2 nfree holds the split free variables.
  const bool split = nfree > 0 && nb > 0 && sizes.back() == -2 * nfree;
  const int free_block = split ? nb - 1 : -1;
  std::vector<int> map_block(nb, -1);
  for (int b = 0; b < nb; ++b) {
    if (b == free_block) continue;
    if (sizes[b] < 0) {
      // LP block: treat each diagonal entry as a 1x1 psd block.
      map_block[b] = static_cast<int>(p.block_sizes.size());
      for (int i = 0; i < -sizes[b]; ++i) p.block_sizes.push_back(1);
    } else {
      map_block[b] = static_cast<int>(p.block_sizes.size());
      p.block_sizes.push_back(sizes[b]);
    }
  }
  p.num_free = split ? nfree : 0;
  p.constraints.resize(m);
  int matno, blk, r, c;
  double v;
  // Split pairs contribute +a and -a; keep only the positive part.
  while (in >> matno >> blk >> r >> c >> v) {
    if (matno < 0 || matno > m || blk < 1 || blk > nb) throw std::runtime_error("read_sdpa: bad entry");
    LinearForm& f = matno == 0 ? p.objective : p.constraints[matno - 1];
    const double sign = matno == 0 ? -1.0 : 1.0;
    const int b = blk - 1;
    if (b == free_block) {
      if (r != c) throw std::runtime_error("read_sdpa: off-diagonal entry in LP block");
      if ((r - 1) % 2 == 0) f.free.emplace_back((r - 1) / 2, sign * v);
      continue;
    }
    if (sizes[b] < 0) {
      if (r != c) throw std::runtime_error("read_sdpa: off-diagonal entry in LP block");
      f.mat.push_back({map_block[b] + r - 1, 0, 0, sign * v});
      continue;
    }
    const int rr = std::min(r, c) - 1, cc = std::max(r, c) - 1;
    f.mat.push_back({map_block[b], rr, cc, sign * v});
  }
  p.validate();
  return p;
}

}  // namespace pie
