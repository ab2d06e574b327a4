from onlinevos.evaluation import score_sequence


def mean_j(pred_maps, gt_maps):
    return score_sequence(pred_maps, gt_maps).mean
