"""Single-stage weakly supervised segmentation from saliency pseudo labels."""
