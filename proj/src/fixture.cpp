#include "stmc/simulate.hpp"

// Bundled 29-unit fixture: pseudo-centroids on a 5.5 x 6 rectangle and child
// populations drawn once from log-uniform [500, 50000] with linear growth of
// -1% to +2% per period (numpy default_rng(1912)). Units are numbered by
// decreasing first-period population, so the first ids are the largest.

namespace stmc {

namespace {

constexpr int kUnits = 29;
constexpr int kTimes = 15;

constexpr double kCentroids[kUnits][2] = {
    {3.1898, 1.3731},
    {4.3416, 0.2593},
    {1.1447, 2.4356},
    {3.9187, 4.4212},
    {2.3090, 0.3452},
    {4.2701, 2.1404},
    {4.4362, 3.2275},
    {1.9138, 1.5599},
    {3.5275, 0.6458},
    {3.2832, 5.1003},
    {3.6443, 1.6543},
    {5.2726, 4.0863},
    {3.9909, 1.4688},
    {3.1414, 4.7303},
    {1.7086, 0.9599},
    {3.8133, 4.0948},
    {1.7538, 2.4354},
    {2.3461, 0.9911},
    {4.5303, 1.6789},
    {1.3445, 4.4227},
    {1.9927, 2.2309},
    {2.4876, 0.8738},
    {1.1241, 2.9946},
    {2.7665, 1.7033},
    {3.5123, 5.5943},
    {5.0778, 2.7692},
    {0.5020, 4.7374},
    {3.6144, 3.7211},
    {2.8228, 1.2230},
};

constexpr int kPopulation[kUnits][kTimes] = {
    {42520, 42608, 42696, 42783, 42871, 42959, 43047, 43134, 43222, 43310, 43398, 43485, 43573, 43661, 43749},
    {39325, 39748, 40171, 40593, 41016, 41439, 41862, 42284, 42707, 43130, 43552, 43975, 44398, 44821, 45243},
    {34710, 34820, 34930, 35039, 35149, 35259, 35368, 35478, 35588, 35697, 35807, 35917, 36026, 36136, 36246},
    {26111, 26088, 26066, 26043, 26020, 25997, 25975, 25952, 25929, 25907, 25884, 25861, 25838, 25816, 25793},
    {23754, 23554, 23355, 23155, 22956, 22756, 22556, 22357, 22157, 21958, 21758, 21559, 21359, 21159, 20960},
    {23748, 23908, 24067, 24227, 24387, 24546, 24706, 24866, 25025, 25185, 25345, 25504, 25664, 25824, 25983},
    {18708, 19079, 19451, 19823, 20195, 20566, 20938, 21310, 21682, 22054, 22425, 22797, 23169, 23541, 23913},
    {16315, 16537, 16760, 16982, 17205, 17427, 17650, 17872, 18094, 18317, 18539, 18762, 18984, 19206, 19429},
    {11569, 11757, 11945, 12132, 12320, 12508, 12696, 12884, 13072, 13260, 13448, 13636, 13824, 14012, 14200},
    {9598, 9595, 9593, 9590, 9588, 9585, 9583, 9580, 9578, 9575, 9573, 9570, 9568, 9565, 9563},
    {5473, 5491, 5510, 5529, 5547, 5566, 5584, 5603, 5622, 5640, 5659, 5678, 5696, 5715, 5734},
    {3782, 3796, 3810, 3823, 3837, 3851, 3864, 3878, 3892, 3906, 3919, 3933, 3947, 3960, 3974},
    {3489, 3539, 3589, 3639, 3689, 3739, 3789, 3839, 3889, 3939, 3989, 4039, 4090, 4140, 4190},
    {3406, 3460, 3515, 3570, 3625, 3679, 3734, 3789, 3844, 3899, 3953, 4008, 4063, 4118, 4173},
    {2608, 2586, 2563, 2541, 2518, 2496, 2473, 2451, 2428, 2406, 2383, 2361, 2338, 2316, 2293},
    {2517, 2567, 2616, 2666, 2716, 2765, 2815, 2864, 2914, 2963, 3013, 3063, 3112, 3162, 3211},
    {2456, 2470, 2485, 2499, 2513, 2527, 2541, 2555, 2570, 2584, 2598, 2612, 2626, 2640, 2655},
    {2266, 2264, 2262, 2260, 2258, 2256, 2254, 2252, 2250, 2248, 2246, 2244, 2242, 2240, 2238},
    {2078, 2057, 2036, 2016, 1995, 1974, 1954, 1933, 1912, 1892, 1871, 1850, 1830, 1809, 1788},
    {1993, 2024, 2056, 2088, 2120, 2152, 2183, 2215, 2247, 2279, 2310, 2342, 2374, 2406, 2438},
    {1736, 1744, 1751, 1758, 1766, 1773, 1780, 1787, 1795, 1802, 1809, 1817, 1824, 1831, 1839},
    {1579, 1576, 1573, 1570, 1567, 1564, 1561, 1558, 1555, 1552, 1549, 1546, 1543, 1540, 1537},
    {1504, 1509, 1513, 1517, 1521, 1525, 1530, 1534, 1538, 1542, 1546, 1551, 1555, 1559, 1563},
    {1475, 1470, 1466, 1461, 1456, 1452, 1447, 1442, 1437, 1433, 1428, 1423, 1419, 1414, 1409},
    {1275, 1267, 1258, 1250, 1241, 1233, 1224, 1216, 1207, 1199, 1190, 1182, 1173, 1165, 1156},
    {1020, 1031, 1042, 1054, 1065, 1076, 1087, 1098, 1109, 1120, 1131, 1143, 1154, 1165, 1176},
    {791, 783, 775, 767, 759, 751, 743, 736, 728, 720, 712, 704, 696, 688, 681},
    {691, 687, 683, 678, 674, 670, 665, 661, 657, 652, 648, 644, 640, 635, 631},
    {653, 660, 668, 675, 683, 690, 698, 705, 712, 720, 727, 735, 742, 750, 757},
};

}  // namespace

std::vector<std::array<double, 2>> fixture_centroids() {
  std::vector<std::array<double, 2>> out(kUnits);
  for (int i = 0; i < kUnits; ++i) out[i] = {kCentroids[i][0], kCentroids[i][1]};
  return out;
}

Adjacency fixture_adjacency() { return knn_adjacency(fixture_centroids(), 4); }

Grid fixture_populations() {
  Grid out(kUnits, kTimes);
  for (int i = 0; i < kUnits; ++i)
    for (int t = 0; t < kTimes; ++t) out(i, t) = kPopulation[i][t];
  return out;
}

}  // namespace stmc
