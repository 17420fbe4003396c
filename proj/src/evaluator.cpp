#include "utls/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <sstream>

namespace utls::eval {

RegionSet regions_from_labels(const LabelImage& labels, const Mask* foreground, RegionKind kind) {
    if (foreground && (foreground->rows() != labels.rows() || foreground->cols() != labels.cols()))
        throw Error("evaluate: label map and foreground mask dimensions differ");
    std::map<int, std::vector<std::uint32_t>> by_label;
    const auto l = labels.data();
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (l[i] == 0) continue;
        if (foreground && !foreground->data()[i]) continue;
        by_label[l[i]].push_back(static_cast<std::uint32_t>(i));
    }
    RegionSet set{labels.rows(), labels.cols(), kind, {}};
    for (auto& [id, px] : by_label) set.regions.push_back({id, std::move(px)});
    return set;
}

namespace {

long intersection_size(const Region& a, const Region& b) {
    long n = 0;
    auto i = a.pixels.begin();
    auto j = b.pixels.begin();
    while (i != a.pixels.end() && j != b.pixels.end()) {
        if (*i < *j) ++i;
        else if (*j < *i) ++j;
        else { ++n; ++i; ++j; }
    }
    return n;
}

void check_same_page(const RegionSet& gt, const RegionSet& pred) {
    if (gt.rows != pred.rows || gt.cols != pred.cols) throw Error("evaluate: ground truth and prediction pages differ in size");
}

struct Candidate {
    double score;
    int gt_id, pred_id;
    std::size_t gi, pi;
};

// Greedy one-to-one selection: descending score, ties by (gt id, pred id).
std::vector<Candidate> greedy_match(std::vector<Candidate> cands, std::size_t n_gt, std::size_t n_pred) {
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.gt_id != b.gt_id) return a.gt_id < b.gt_id;
        return a.pred_id < b.pred_id;
    });
    std::vector<char> gt_used(n_gt, 0), pred_used(n_pred, 0);
    std::vector<Candidate> out;
    for (const auto& c : cands) {
        if (gt_used[c.gi] || pred_used[c.pi]) continue;
        gt_used[c.gi] = pred_used[c.pi] = 1;
        out.push_back(c);
    }
    return out;
}

double safe_div(double num, double den, bool& degenerate) {
    if (den == 0.0) {
        degenerate = true;
        return 0.0;
    }
    return num / den;
}

double f_measure(double dr, double ra) { return dr + ra > 0.0 ? 2.0 * dr * ra / (dr + ra) : 0.0; }

}  // namespace

double match_score(const Region& gt, const Region& pred) {
    const long inter = intersection_size(gt, pred);
    const long uni = static_cast<long>(gt.pixels.size() + pred.pixels.size()) - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Icdar2013Report evaluate_icdar2013(const RegionSet& gt, const RegionSet& pred, double threshold) {
    check_same_page(gt, pred);
    Icdar2013Report r;
    r.threshold = threshold;
    r.N1 = static_cast<long>(gt.regions.size());
    r.N2 = static_cast<long>(pred.regions.size());
    r.match_matrix.assign(gt.regions.size(), std::vector<double>(pred.regions.size(), 0.0));
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < gt.regions.size(); ++i)
        for (std::size_t j = 0; j < pred.regions.size(); ++j) {
            const double s = match_score(gt.regions[i], pred.regions[j]);
            r.match_matrix[i][j] = s;
            if (s >= threshold && s > 0.0) cands.push_back({s, gt.regions[i].id, pred.regions[j].id, i, j});
        }
    r.M = static_cast<long>(greedy_match(std::move(cands), gt.regions.size(), pred.regions.size()).size());
    r.DR = safe_div(static_cast<double>(r.M), static_cast<double>(r.N1), r.degenerate);
    r.RA = safe_div(static_cast<double>(r.M), static_cast<double>(r.N2), r.degenerate);
    r.FM = f_measure(r.DR, r.RA);
    return r;
}

Icdar2017Report evaluate_icdar2017(const RegionSet& gt, const RegionSet& pred, double threshold) {
    check_same_page(gt, pred);
    Icdar2017Report r;
    r.threshold = threshold;
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < gt.regions.size(); ++i)
        for (std::size_t j = 0; j < pred.regions.size(); ++j) {
            const double s = match_score(gt.regions[i], pred.regions[j]);
            if (s > 0.0) cands.push_back({s, gt.regions[i].id, pred.regions[j].id, i, j});
        }
    const auto matched = greedy_match(std::move(cands), gt.regions.size(), pred.regions.size());
    std::vector<char> gt_used(gt.regions.size(), 0), pred_used(pred.regions.size(), 0);
    for (const auto& c : matched) {
        gt_used[c.gi] = pred_used[c.pi] = 1;
        const Region& g = gt.regions[c.gi];
        const Region& p = pred.regions[c.pi];
        PairIu pr;
        pr.gt_id = g.id;
        pr.pred_id = p.id;
        pr.iu = c.score;
        pr.tp = intersection_size(g, p);
        pr.fp = static_cast<long>(p.pixels.size()) - pr.tp;
        pr.fn = static_cast<long>(g.pixels.size()) - pr.tp;
        bool unused = false;
        pr.precision = safe_div(static_cast<double>(pr.tp), static_cast<double>(pr.tp + pr.fp), unused);
        pr.recall = safe_div(static_cast<double>(pr.tp), static_cast<double>(pr.tp + pr.fn), unused);
        r.TP += pr.tp;
        r.FP += pr.fp;
        r.FN += pr.fn;
        const bool missed = pr.recall < threshold;
        const bool extra = pr.precision < threshold;
        if (!missed && !extra) ++r.CL;
        if (missed) ++r.ML;
        if (extra) ++r.EL;
        r.pair_ius.push_back(pr);
    }
    for (std::size_t i = 0; i < gt.regions.size(); ++i)
        if (!gt_used[i]) {
            ++r.ML;
            r.FN += static_cast<long>(gt.regions[i].pixels.size());
        }
    for (std::size_t j = 0; j < pred.regions.size(); ++j)
        if (!pred_used[j]) {
            ++r.EL;
            r.FP += static_cast<long>(pred.regions[j].pixels.size());
        }
    r.pixel_iu = safe_div(static_cast<double>(r.TP), static_cast<double>(r.TP + r.FP + r.FN), r.degenerate);
    r.line_iu = safe_div(static_cast<double>(r.CL), static_cast<double>(r.CL + r.ML + r.EL), r.degenerate);
    return r;
}

CorpusReport aggregate_reports(std::vector<PageReport> pages) {
    CorpusReport c;
    for (const auto& p : pages) {
        c.M += p.icdar2013.M;
        c.N1 += p.icdar2013.N1;
        c.N2 += p.icdar2013.N2;
        c.TP += p.icdar2017.TP;
        c.FP += p.icdar2017.FP;
        c.FN += p.icdar2017.FN;
        c.CL += p.icdar2017.CL;
        c.ML += p.icdar2017.ML;
        c.EL += p.icdar2017.EL;
    }
    bool unused = false;
    c.DR = safe_div(static_cast<double>(c.M), static_cast<double>(c.N1), unused);
    c.RA = safe_div(static_cast<double>(c.M), static_cast<double>(c.N2), unused);
    c.FM = f_measure(c.DR, c.RA);
    c.pixel_iu = safe_div(static_cast<double>(c.TP), static_cast<double>(c.TP + c.FP + c.FN), unused);
    c.line_iu = safe_div(static_cast<double>(c.CL), static_cast<double>(c.CL + c.ML + c.EL), unused);
    c.pages = std::move(pages);
    return c;
}

PageReport evaluate_page(const std::string& page_id, const LabelImage& gt, const LabelImage& pred,
                         const Mask& foreground, double threshold_2013, double threshold_2017) {
    const RegionSet g = regions_from_labels(gt, &foreground, RegionKind::ground_truth);
    const RegionSet p = regions_from_labels(pred, &foreground, RegionKind::prediction);
    return {page_id, evaluate_icdar2013(g, p, threshold_2013), evaluate_icdar2017(g, p, threshold_2017)};
}

std::string report_json(const CorpusReport& report) {
    using nlohmann::json;
    json pages = json::array();
    double t13 = 0.0, t17 = 0.0;
    for (const auto& p : report.pages) {
        const auto& a = p.icdar2013;
        const auto& b = p.icdar2017;
        t13 = a.threshold;
        t17 = b.threshold;
        pages.push_back({{"page", p.page_id},
                         {"icdar2013", {{"M", a.M}, {"N1", a.N1}, {"N2", a.N2}, {"DR", a.DR}, {"RA", a.RA}, {"FM", a.FM}, {"degenerate", a.degenerate}}},
                         {"icdar2017", {{"TP", b.TP}, {"FP", b.FP}, {"FN", b.FN}, {"pixel_iu", b.pixel_iu}, {"line_iu", b.line_iu},
                                        {"CL", b.CL}, {"ML", b.ML}, {"EL", b.EL}, {"degenerate", b.degenerate}}}});
    }
    json doc{{"points", "foreground pixels of the binarized page"},
             {"matching", "greedy one-to-one by descending score, ties by (gt id, pred id)"},
             {"icdar2013_threshold", t13},
             {"icdar2017_threshold", t17},
             {"pages", pages},
             {"corpus",
              {{"M", report.M}, {"N1", report.N1}, {"N2", report.N2}, {"DR", report.DR}, {"RA", report.RA}, {"FM", report.FM},
               {"TP", report.TP}, {"FP", report.FP}, {"FN", report.FN}, {"pixel_iu", report.pixel_iu},
               {"CL", report.CL}, {"ML", report.ML}, {"EL", report.EL}, {"line_iu", report.line_iu}}}};
    return doc.dump(2) + "\n";
}

std::string report_tsv(const CorpusReport& report) {
    std::ostringstream out;
    out << "# points = foreground pixels of the binarized page\n";
    out << "page\tM\tN1\tN2\tDR\tRA\tFM\tpixel_iu\tline_iu\tCL\tML\tEL\n";
    char buf[256];
    for (const auto& p : report.pages) {
        const auto& a = p.icdar2013;
        const auto& b = p.icdar2017;
        std::snprintf(buf, sizeof buf, "%ld\t%ld\t%ld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%ld\t%ld\t%ld\n", a.M, a.N1, a.N2, a.DR,
                      a.RA, a.FM, b.pixel_iu, b.line_iu, b.CL, b.ML, b.EL);
        out << p.page_id << '\t' << buf;
    }
    std::snprintf(buf, sizeof buf, "%ld\t%ld\t%ld\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%ld\t%ld\t%ld\n", report.M, report.N1,
                  report.N2, report.DR, report.RA, report.FM, report.pixel_iu, report.line_iu, report.CL, report.ML,
                  report.EL);
    out << "corpus\t" << buf;
    return out.str();
}

RgbImage overlay(const LabelImage& gt, const LabelImage& pred) {
    if (gt.rows() != pred.rows() || gt.cols() != pred.cols()) throw Error("overlay: label maps differ in size");
    RgbImage img{gt.rows(), gt.cols(), std::vector<std::uint8_t>(gt.size() * 3, 255)};
    static constexpr std::uint8_t palette[8][3] = {{166, 206, 227}, {178, 223, 138}, {251, 154, 153}, {253, 191, 111},
                                                   {202, 178, 214}, {255, 255, 153}, {141, 211, 199}, {252, 205, 229}};
    for (int r = 0; r < gt.rows(); ++r)
        for (int c = 0; c < gt.cols(); ++c) {
            std::uint8_t* px = img.rgb.data() + (static_cast<std::size_t>(r) * gt.cols() + c) * 3;
            if (const int l = gt(r, c)) std::copy_n(palette[(l - 1) % 8], 3, px);
            const int p = pred(r, c);
            if (p == 0) continue;
            const bool edge = (r > 0 && pred(r - 1, c) != p) || (r + 1 < gt.rows() && pred(r + 1, c) != p) ||
                              (c > 0 && pred(r, c - 1) != p) || (c + 1 < gt.cols() && pred(r, c + 1) != p);
            if (edge) px[0] = px[1] = px[2] = 0;
        }
    return img;
}

}  // namespace utls::eval
